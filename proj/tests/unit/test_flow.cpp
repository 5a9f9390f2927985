#include "gmop/error.hpp"
#include "gmop/flow.hpp"
#include "gmop/neural/optim.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <random>

using namespace gmop;
using namespace gmop::flow;

namespace {

Vec random_vec(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

// Randomizes every parameter so the stack is far from the identity.
void perturb(ParamStore& store, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : store.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += d(rng);
  }
}

// Two interleaved half circles, standardized.
std::vector<Vec> two_moons(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    const double a = u(rng);
    Vec p(2);
    if (i % 2 == 0) {
      p << std::cos(a), std::sin(a);
    } else {
      p << 1.0 - std::cos(a), 0.5 - std::sin(a);
    }
    p(0) += noise(rng);
    p(1) += noise(rng);
    p(0) = (p(0) - 0.5) / 0.87;
    p(1) = (p(1) - 0.25) / 0.5;
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("identity-initialized stack") {
  std::mt19937_64 rng(1);
  ParamStore store;
  FlowConfig cfg;
  cfg.dim = 5;
  cfg.cond_dim = 3;
  cfg.layers = 3;
  cfg.identity_init = true;
  FlowStack flow(cfg, store, "f", rng);
  const Vec y = random_vec(5, rng);
  const Vec c = random_vec(3, rng);
  const auto [z, logdet] = flow.forward_normalize(store, y, c);
  Vec expected = y;
  for (const auto& layer : flow.layers()) {
    Vec next(5);
    for (int i = 0; i < 5; ++i) next(i) = expected(layer.perm[static_cast<std::size_t>(i)]);
    expected = next;
  }
  CHECK((z - expected).norm() == 0.0);
  CHECK(logdet == 0.0);
  CHECK(flow.log_prob(store, y, c) == doctest::Approx(base_log_density(expected)).epsilon(1e-15));
  const auto [back, inv_logdet] = flow.inverse_generate(store, z, c);
  CHECK((back - y).norm() == 0.0);
  CHECK(inv_logdet == 0.0);

  ParamStore s2;
  FlowConfig c2 = cfg;
  c2.dim = 2;
  c2.cond_dim = 0;
  FlowStack f2(c2, s2, "f", rng);
  CHECK(f2.log_prob(s2, Vec::Zero(2), Vec()) == doctest::Approx(-std::log(2.0 * std::numbers::pi)));
}

TEST_CASE("round trip and log-det consistency") {
  for (int init = 0; init < 5; ++init) {
    std::mt19937_64 rng(10 + init);
    ParamStore store;
    FlowConfig cfg;
    cfg.dim = 2 + init * 3;
    cfg.cond_dim = 4;
    cfg.layers = 4;
    cfg.hidden = 16;
    FlowStack flow(cfg, store, "f", rng);
    perturb(store, rng, 0.2);
    for (int k = 0; k < 50; ++k) {
      const Vec y = random_vec(cfg.dim, rng, 2.0);
      const Vec c = random_vec(cfg.cond_dim, rng);
      const auto [z, ld] = flow.forward_normalize(store, y, c);
      const auto [back, ld_inv] = flow.inverse_generate(store, z, c);
      CHECK((back - y).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(ld + ld_inv) < 1e-8);
      const Vec z2 = random_vec(cfg.dim, rng);
      const auto [y2, unused] = flow.inverse_generate(store, z2, c);
      CHECK((flow.forward_normalize(store, y2, c).first - z2).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("log-det matches a finite-difference Jacobian") {
  std::mt19937_64 rng(3);
  for (int dim = 2; dim <= 6; ++dim) {
    ParamStore store;
    FlowConfig cfg;
    cfg.dim = dim;
    cfg.cond_dim = 2;
    cfg.layers = 4;
    cfg.hidden = 16;
    FlowStack flow(cfg, store, "f", rng);
    perturb(store, rng, 0.2);
    for (int k = 0; k < 10; ++k) {
      const Vec y = random_vec(dim, rng);
      const Vec c = random_vec(2, rng);
      Mat jac(dim, dim);
      const double h = 1e-6;
      for (int j = 0; j < dim; ++j) {
        Vec up = y, down = y;
        up(j) += h;
        down(j) -= h;
        const Vec diff = flow.forward_normalize(store, up, c).first - flow.forward_normalize(store, down, c).first;
        jac.col(j) = diff / (2 * h);
      }
      const double numeric = std::log(std::abs(jac.determinant()));
      const double analytic = flow.forward_normalize(store, y, c).second;
      CHECK(std::abs(std::exp(analytic - numeric) - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("conditioning changes the output") {
  std::mt19937_64 rng(4);
  ParamStore store;
  FlowConfig cfg;
  cfg.dim = 4;
  cfg.cond_dim = 3;
  cfg.layers = 2;
  FlowStack flow(cfg, store, "f", rng);
  const Vec y = random_vec(4, rng);
  const Vec a = flow.forward_normalize(store, y, random_vec(3, rng)).first;
  const Vec b = flow.forward_normalize(store, y, random_vec(3, rng)).first;
  CHECK((a - b).norm() > 1e-6);
  CHECK_THROWS_AS(flow.forward_normalize(store, Vec::Zero(3), Vec::Zero(3)), ShapeError);
  CHECK_THROWS_AS(flow.forward_normalize(store, Vec::Zero(4), Vec::Zero(2)), ShapeError);
}

TEST_CASE("nll loss gradient and batch semantics") {
  std::mt19937_64 rng(5);
  ParamStore store;
  FlowConfig cfg;
  cfg.dim = 3;
  cfg.cond_dim = 2;
  cfg.layers = 3;
  cfg.hidden = 8;
  FlowStack flow(cfg, store, "f", rng);
  perturb(store, rng, 0.1);
  std::vector<std::pair<Vec, Vec>> data;
  for (int i = 0; i < 4; ++i) data.emplace_back(random_vec(3, rng), random_vec(2, rng));
  auto loss_of = [&](const std::vector<std::pair<Vec, Vec>>& batch) {
    neural::LossFn fn = [&, batch](ParamStore& s, bool g) {
      Tape t(g);
      std::vector<std::pair<Var, Var>> vars;
      for (const auto& [y, c] : batch) vars.emplace_back(t.constant(y), t.constant(c));
      const Var l = nll_loss(t, s, flow, vars);
      if (g) t.backward(l);
      return t.scalar(l);
    };
    return fn;
  };
  const auto report = neural::grad_check(loss_of(data), store, 1e-4);
  INFO("max rel err ", report.max_rel_error);
  CHECK(report.pass);

  const double one = loss_of({data[0]})(store, false);
  CHECK(one == doctest::Approx(-flow.log_prob(store, data[0].first, data[0].second)).epsilon(1e-14));
  auto doubled = data;
  doubled.insert(doubled.end(), data.begin(), data.end());
  CHECK(loss_of(doubled)(store, false) == doctest::Approx(loss_of(data)(store, false)).epsilon(1e-14));
  Tape t(false);
  CHECK_THROWS_AS(nll_loss(t, store, flow, {}), std::invalid_argument);
}

TEST_CASE("sampling") {
  std::mt19937_64 rng(6);
  ParamStore store;
  FlowConfig cfg;
  cfg.dim = 2;
  cfg.cond_dim = 1;
  cfg.layers = 2;
  cfg.identity_init = true;
  FlowStack flow(cfg, store, "f", rng);
  const Vec c = Vec::Ones(1);
  const auto a = flow.sample(store, c, 6, 99);
  CHECK(a.size() == 6);
  const auto b = flow.sample(store, c, 6, 99);
  for (int i = 0; i < 6; ++i) CHECK(a[i] == b[i]);
  const int n = 10000;
  const auto many = flow.sample(store, c, n, 7);
  Vec mean = Vec::Zero(2);
  for (const auto& s : many) mean += s;
  mean /= n;
  CHECK(mean.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(n));
}

TEST_CASE("training on two moons and density normalization") {
  std::mt19937_64 rng(7);
  ParamStore store;
  FlowConfig cfg;
  cfg.dim = 2;
  cfg.cond_dim = 0;
  cfg.layers = 2;
  cfg.hidden = 32;
  FlowStack flow(cfg, store, "f", rng);
  const auto train = two_moons(2000, rng);
  const auto eval = two_moons(500, rng);
  auto eval_loss = [&]() {
    double total = 0.0;
    for (const auto& y : eval) total -= flow.log_prob(store, y, Vec());
    return total / static_cast<double>(eval.size());
  };
  std::vector<double> curve{eval_loss()};
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (int step = 1; step <= 500; ++step) {
    Tape t;
    std::vector<std::pair<Var, Var>> batch;
    for (int i = 0; i < 64; ++i) batch.emplace_back(t.constant(train[pick(rng)]), t.constant(Vec()));
    t.backward(nll_loss(t, store, flow, batch));
    neural::adam_step(store, {5e-3});
    if (step % 50 == 0) curve.push_back(eval_loss());
  }
  double best = curve.front();
  for (std::size_t k = 1; k < curve.size(); ++k) {
    INFO("checkpoint ", k, " loss ", curve[k], " best so far ", best);
    CHECK(curve[k] <= best + 0.05 * std::abs(best));
    best = std::min(best, curve[k]);
  }
  CHECK(curve.back() < curve.front() - 0.2);

  // Trapezoid quadrature over +-6 standard deviations.
  const int n = 241;
  const double lo = -6.0, hi = 6.0, h = (hi - lo) / (n - 1);
  double integral = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vec y(2);
      y << lo + i * h, lo + j * h;
      const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
      integral += w * std::exp(flow.log_prob(store, y, Vec()));
    }
  }
  integral *= h * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
}
