#include "gmop/error.hpp"
#include "gmop/geom.hpp"

#include <doctest.h>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>
#include <tuple>

using namespace gmop;
using namespace gmop::geom;
using gmop::scene::AgentKind;
using gmop::scene::AgentTypeTable;

namespace {

constexpr double kPi = std::numbers::pi;

Trajectory traj(std::vector<Point> pts, double dt = 0.1) {
  Trajectory t;
  t.positions = std::move(pts);
  t.dt = dt;
  return t;
}

Trajectory straight(Point start, Point velocity, int n, double dt, bool skip_first = true) {
  Trajectory t;
  t.dt = dt;
  const int first = skip_first ? 1 : 0;
  for (int i = first; i < n + first; ++i) t.positions.push_back(start + velocity * (i * dt));
  return t;
}

// Exhaustive oracle: all qualifying cells sorted by (min, max, i).
std::optional<std::tuple<int, int>> crossing_oracle(const Eigen::MatrixXd& d, double eps) {
  std::optional<std::tuple<int, int, int>> best;
  std::tuple<int, int> cell;
  for (int i = 0; i < d.rows(); ++i) {
    for (int j = 0; j < d.cols(); ++j) {
      if (d(i, j) > eps) continue;
      auto key = std::make_tuple(std::min(i, j), std::max(i, j), i);
      if (!best || key < *best) {
        best = key;
        cell = {i, j};
      }
    }
  }
  if (!best) return std::nullopt;
  return cell;
}

}  // namespace

TEST_CASE("heading") {
  CHECK(heading(traj({{0, 0}, {1, 0}})).angle == doctest::Approx(0.0));
  CHECK(heading(traj({{0, 0}, {0, 1}})).angle == doctest::Approx(kPi / 2));
  CHECK(heading(traj({{0, 0}, {0, 0}})).stationary);
  // Last nonzero displacement wins over a trailing stop.
  const auto h = heading(traj({{0, 0}, {0, 1}, {0, 1}}));
  CHECK_FALSE(h.stationary);
  CHECK(h.angle == doctest::Approx(kPi / 2));
  CHECK_THROWS_AS(heading(traj({{0, 0}})), std::invalid_argument);
}

TEST_CASE("approach_angle") {
  CHECK(approach_angle({1, 0}, {1, 0}).alpha == doctest::Approx(0.0));
  CHECK(approach_angle({0, 1}, {1, 0}).alpha == doctest::Approx(kPi / 2));
  CHECK(approach_angle({-1, 0}, {1, 0}).alpha == doctest::Approx(kPi));
  const auto degenerate = approach_angle({0, 0}, {1, 0});
  CHECK(degenerate.degenerate);
  CHECK(degenerate.alpha == doctest::Approx(kPi / 2));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5), pos(0.01, 100);
  for (int k = 0; k < 1000; ++k) {
    const Point d(u(rng), u(rng)), x(u(rng), u(rng));
    const double a = approach_angle(d, x).alpha;
    CHECK(std::abs(approach_angle(pos(rng) * d, pos(rng) * x).alpha - a) < 1e-12);
    CHECK(a >= 0.0);
    CHECK(a <= kPi);
  }
}

TEST_CASE("viewing_angle") {
  CHECK(viewing_angle({0, 0}, 0.0, {1, 0}) == doctest::Approx(0.0));
  CHECK(viewing_angle({0, 0}, 0.0, {-1, 0}) == doctest::Approx(kPi));
  // Rotating the frame so the observer faces +x puts (0,-1) at bearing -5pi/4, i.e. 3pi/4 away.
  const double gamma = 3 * kPi / 4;
  const Point rotated(std::cos(-gamma) * 0 - std::sin(-gamma) * -1, std::sin(-gamma) * 0 + std::cos(-gamma) * -1);
  const double oracle = std::abs(std::atan2(rotated.y(), rotated.x()));
  CHECK(viewing_angle({0, 0}, gamma, {0, -1}) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(3 * kPi / 4));
  CHECK_THROWS_AS(viewing_angle({1, 1}, 0.0, {1, 1}), std::domain_error);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-20, 20), ang(-kPi, kPi);
  for (int k = 0; k < 1000; ++k) {
    const Point sm(u(rng), u(rng)), sn(u(rng), u(rng));
    const double g = ang(rng);
    const double phi = viewing_angle(sm, g, sn);
    const double rot = ang(rng);
    const Eigen::Rotation2Dd r(rot);
    const Point shift(u(rng), u(rng));
    const double moved = viewing_angle(r * sm + shift, g + rot, r * sn + shift);
    CHECK(std::abs(moved - phi) < 1e-9);
  }
}

TEST_CASE("pairwise_distance_matrix") {
  const auto a = traj({{0, 0}, {1, 0}, {2, 0}});
  const auto d = pairwise_distance_matrix(a, a);
  for (int i = 0; i < 3; ++i) CHECK(d(i, i) == 0.0);
  const auto c = pairwise_distance_matrix(traj({{0, 0}, {0, 0}}), traj({{3, 4}, {3, 4}}));
  CHECK((c.array() == 5.0).all());
  CHECK_THROWS_AS(pairwise_distance_matrix(a, traj({{0, 0}})), ShapeError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 50; ++k) {
    Trajectory m, n;
    for (int i = 0; i < 12; ++i) {
      m.positions.emplace_back(u(rng), u(rng));
      n.positions.emplace_back(u(rng), u(rng));
    }
    const auto dm = pairwise_distance_matrix(m, n);
    const auto dn = pairwise_distance_matrix(n, m);
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        const double dx = m.positions[i].x() - n.positions[j].x();
        const double dy = m.positions[i].y() - n.positions[j].y();
        CHECK(std::abs(dm(i, j) - std::sqrt(dx * dx + dy * dy)) < 1e-12);
        CHECK(dm(i, j) == dn(j, i));
      }
    }
  }
}

TEST_CASE("first_crossing") {
  Eigen::MatrixXd far = Eigen::MatrixXd::Constant(4, 4, 10.0);
  CHECK_FALSE(first_crossing(far, 1.0).has_value());
  Eigen::MatrixXd single = far;
  single(2, 2) = 0.5;
  const auto c = first_crossing(single, 1.0);
  REQUIRE(c.has_value());
  CHECK(c->t_m == 2);
  CHECK(c->t_n == 2);
  CHECK_THROWS_AS(first_crossing(far, 0.0), std::invalid_argument);

  // m moves along +x and reaches the origin at step 3; n moves along +y and reaches it at step 5.
  Trajectory m, n;
  for (int i = 0; i < 10; ++i) {
    m.positions.emplace_back(-3.0 + i, 0.0);
    n.positions.emplace_back(0.0, -5.0 + i);
  }
  const auto d = pairwise_distance_matrix(m, n);
  const auto hit = first_crossing(d, 0.5);
  REQUIRE(hit.has_value());
  const auto oracle = crossing_oracle(d, 0.5);
  REQUIRE(oracle.has_value());
  CHECK(hit->t_m == std::get<0>(*oracle));
  CHECK(hit->t_n == std::get<1>(*oracle));
  CHECK(hit->t_m == 3);
  CHECK(hit->t_n == 5);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 10);
  for (int k = 0; k < 1000; ++k) {
    const int size = 1 + static_cast<int>(rng() % 12);
    Eigen::MatrixXd r(size, size);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) r(i, j) = u(rng);
    }
    const double eps = 0.2 + u(rng) * 0.2;
    const auto got = first_crossing(r, eps);
    const auto want = crossing_oracle(r, eps);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(got->t_m == std::get<0>(*want));
      CHECK(got->t_n == std::get<1>(*want));
    }
  }
}

TEST_CASE("extrapolate_hypothetical") {
  AgentTypeTable types;
  const auto& vehicle = types[AgentKind::Vehicle];
  const double dt = 0.1;

  SUBCASE("no-op when already above the floor") {
    const auto past = straight({0, 0}, {8, 0}, 5, dt, false);
    const auto future = straight(past.back(), {8, 0}, 10, dt);
    const auto out = extrapolate_hypothetical(past, future, vehicle);
    CHECK_FALSE(out.degenerate);
    for (std::size_t t = 0; t < future.size(); ++t) CHECK((out.trajectory[t] - future[t]).norm() < 1e-12);
  }
  SUBCASE("stationary past, slow future raised to the type speed") {
    const auto past = traj({{0, 0}, {0, 0}, {0, 0}}, dt);
    const auto future = straight({0, 0}, {0, 2}, 10, dt);
    const auto out = extrapolate_hypothetical(past, future, vehicle);
    Point prev = past.back();
    for (std::size_t t = 0; t < out.trajectory.size(); ++t) {
      const Point step = out.trajectory[t] - prev;
      CHECK(step.norm() / dt == doctest::Approx(7.0));
      CHECK(step.normalized().dot(Point(0, 1)) == doctest::Approx(1.0));
      prev = out.trajectory[t];
    }
  }
  SUBCASE("fast past keeps its own speed as floor") {
    const auto past = straight({0, 0}, {10, 0}, 5, dt, false);
    Trajectory future;
    future.dt = dt;
    Point p = past.back();
    std::vector<double> speeds;
    for (int t = 0; t < 10; ++t) {
      const double v = (t >= 3 && t < 7) ? 4.0 : 12.0;
      speeds.push_back(v);
      p += Point(v * dt, 0);
      future.positions.push_back(p);
    }
    const auto out = extrapolate_hypothetical(past, future, vehicle);
    Point prev = past.back();
    for (int t = 0; t < 10; ++t) {
      const double v = (out.trajectory[t] - prev).norm() / dt;
      CHECK(v == doctest::Approx(std::max(speeds[t], 10.0)));
      prev = out.trajectory[t];
    }
  }
  SUBCASE("all stationary is degenerate") {
    const auto past = traj({{1, 1}, {1, 1}}, dt);
    const auto future = traj({{1, 1}, {1, 1}, {1, 1}}, dt);
    const auto out = extrapolate_hypothetical(past, future, vehicle);
    CHECK(out.degenerate);
    CHECK(out.trajectory.positions == future.positions);
  }
  SUBCASE("never slows and never turns") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 200; ++k) {
      Trajectory past, future;
      past.dt = future.dt = dt;
      Point p(0, 0);
      for (int i = 0; i < 4; ++i) {
        p += Point(u(rng), u(rng)) * (k % 3 == 0 ? 0.0 : 1.0);
        past.positions.push_back(p);
      }
      for (int i = 0; i < 15; ++i) {
        const bool stop = rng() % 5 == 0;
        p += stop ? Point(0, 0) : Point(u(rng), u(rng));
        future.positions.push_back(p);
      }
      const auto out = extrapolate_hypothetical(past, future, types[AgentKind::Bicycle]);
      Point prev_in = past.back(), prev_out = past.back();
      for (std::size_t t = 0; t < future.size(); ++t) {
        const Point din = future[t] - prev_in;
        const Point dout = out.trajectory[t] - prev_out;
        CHECK(dout.norm() >= din.norm() - 1e-12);
        if (din.norm() > 1e-9) CHECK(std::abs(din.normalized().dot(dout.normalized()) - 1.0) < 1e-9);
        prev_in = future[t];
        prev_out = out.trajectory[t];
      }
    }
  }
}
