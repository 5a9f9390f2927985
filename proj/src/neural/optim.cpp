#include "gmop/neural/optim.hpp"

#include "gmop/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gmop::neural {

void adam_step(ParamStore& store, const AdamConfig& config) {
  for (const auto& p : store.params()) {
    if (p.trainable && !p.grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  const auto t = static_cast<double>(store.step + 1);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : store.params()) {
    if (p.trainable) {
      p.adam_m = config.beta1 * p.adam_m + (1.0 - config.beta1) * p.grad;
      p.adam_v = config.beta2 * p.adam_v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= config.lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + config.eps);
    }
    p.grad.setZero();
  }
  ++store.step;
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : store.params()) {
      if (p.trainable) p.grad *= f;
    }
  }
  return norm;
}

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& store, double tol, const GradCheckOptions& options) {
  store.zero_grad();
  loss_fn(store, true);
  std::vector<Mat> analytic;
  for (const auto& p : store.params()) analytic.push_back(p.grad);
  store.zero_grad();

  GradCheckReport report;
  report.tol = tol;
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < store.size(); ++k) {
    auto& p = store[k];
    if (!p.trainable) continue;
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(p.value.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (options.max_entries > 0 && entries.size() > options.max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries);
    }
    GradCheckEntry entry{p.name, 0.0};
    for (auto i : entries) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + options.step;
      const double up = loss_fn(store, false);
      x = saved - options.step;
      const double down = loss_fn(store, false);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace gmop::neural
