#include "gmop/eval.hpp"

#include "gmop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gmop::eval {

namespace {

void check_shapes(const std::vector<SceneSample>& samples, const SceneSample& truth) {
  if (samples.empty()) throw std::invalid_argument("joint metrics need at least one sample");
  if (truth.empty()) throw ShapeError("ground truth has no agents");
  const std::size_t steps = truth.front().size();
  if (steps == 0) throw ShapeError("ground truth has no future steps");
  for (const auto& agent : truth) {
    if (agent.size() != steps) throw ShapeError("ground truth agents differ in length");
  }
  for (const auto& s : samples) {
    if (s.size() != truth.size()) {
      throw ShapeError(fmt::format("sample has {} agents, ground truth {}", s.size(), truth.size()));
    }
    for (const auto& agent : s) {
      if (agent.size() != steps) {
        throw ShapeError(fmt::format("sample has {} steps, ground truth {}", agent.size(), steps));
      }
    }
  }
}

}  // namespace

double joint_min_ade(const std::vector<SceneSample>& samples, const SceneSample& truth) {
  check_shapes(samples, truth);
  const double count = static_cast<double>(truth.size() * truth.front().size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    double total = 0.0;
    for (std::size_t a = 0; a < truth.size(); ++a) {
      for (std::size_t t = 0; t < truth[a].size(); ++t) total += (s[a][t] - truth[a][t]).norm();
    }
    best = std::min(best, total / count);
  }
  return best;
}

double joint_min_fde(const std::vector<SceneSample>& samples, const SceneSample& truth) {
  check_shapes(samples, truth);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    double total = 0.0;
    for (std::size_t a = 0; a < truth.size(); ++a) total += (s[a].back() - truth[a].back()).norm();
    best = std::min(best, total / static_cast<double>(truth.size()));
  }
  return best;
}

Eigen::VectorXd flatten(const SceneSample& sample) {
  std::size_t n = 0;
  for (const auto& agent : sample) n += 2 * agent.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const auto& agent : sample) {
    for (const auto& p : agent) {
      out(k++) = p.x();
      out(k++) = p.y();
    }
  }
  return out;
}

Eigen::VectorXd kde_bandwidths(const std::vector<Eigen::VectorXd>& points, double floor) {
  if (points.size() < 2) throw std::invalid_argument("kernel density needs at least 2 points");
  if (!(floor > 0.0)) throw std::invalid_argument("bandwidth floor must be positive");
  const auto d = points.front().size();
  const double m = static_cast<double>(points.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& p : points) {
    if (p.size() != d) throw ShapeError("kernel density points differ in dimension");
    mean += p;
  }
  mean /= m;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& p : points) var += (p - mean).cwiseAbs2();
  var /= m - 1.0;
  const double factor = std::pow(m, -1.0 / (static_cast<double>(d) + 4.0));
  return (var.cwiseSqrt() * factor).cwiseMax(floor);
}

double kde_log_density(const std::vector<Eigen::VectorXd>& points, const Eigen::VectorXd& bandwidths,
                       const Eigen::VectorXd& x) {
  if (points.empty()) throw std::invalid_argument("kernel density needs points");
  if (x.size() != bandwidths.size()) throw ShapeError("kernel density query has the wrong dimension");
  const double log_norm =
      -bandwidths.array().log().sum() - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
  std::vector<double> terms;
  terms.reserve(points.size());
  for (const auto& p : points) {
    if (p.size() != x.size()) throw ShapeError("kernel density points differ in dimension");
    terms.push_back(log_norm - 0.5 * ((x - p).array() / bandwidths.array()).square().sum());
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc) - std::log(static_cast<double>(points.size()));
}

double kde_nll(const std::vector<SceneSample>& samples, const SceneSample& truth, double floor) {
  check_shapes(samples, truth);
  std::vector<Eigen::VectorXd> points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(flatten(s));
  return -kde_log_density(points, kde_bandwidths(points, floor), flatten(truth));
}

double joint_nll_metric(const Sampler& sampler, const std::vector<scene::Scene>& scenes, int max_samples) {
  if (max_samples < 2) throw std::invalid_argument("joint NLL needs max_samples >= 2");
  if (scenes.empty()) throw std::invalid_argument("joint NLL needs at least one scene");
  double total = 0.0;
  for (const auto& s : scenes) total += kde_nll(sampler(scene::observe(s), max_samples), scene::future_positions(s));
  return total / static_cast<double>(scenes.size());
}

}  // namespace gmop::eval
