#include "gmop/geom.hpp"

#include "gmop/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace gmop::geom {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

Heading heading(const Trajectory& traj) {
  if (traj.size() < 2) throw std::invalid_argument("heading needs at least 2 points");
  for (std::size_t t = traj.size() - 1; t >= 1; --t) {
    const Point d = traj[t] - traj[t - 1];
    if (d.norm() > kStationaryEps) return {std::atan2(d.y(), d.x()), false};
  }
  return {0.0, true};
}

ApproachAngle approach_angle(const Point& d, const Point& displacement) {
  const double nd = d.norm();
  const double nx = displacement.norm();
  if (nd <= kStationaryEps || nx <= kStationaryEps) return {kPi / 2.0, true};
  const double c = std::clamp(d.dot(displacement) / (nd * nx), -1.0, 1.0);
  return {std::acos(c), false};
}

double wrap_abs_angle(double x) {
  double r = std::fmod(std::abs(x), kTwoPi);
  if (r > kPi) r = kTwoPi - r;
  return r;
}

double viewing_angle(const Point& from, double gamma, const Point& to) {
  const Point d = to - from;
  if (d.norm() <= kStationaryEps) throw std::domain_error("viewing_angle: coincident positions");
  return wrap_abs_angle(std::atan2(d.y(), d.x()) - gamma);
}

Eigen::MatrixXd pairwise_distance_matrix(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw ShapeError("pairwise_distance_matrix: trajectory lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = (a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]).norm();
    }
  }
  return out;
}

std::optional<CrossingCell> first_crossing(const Eigen::MatrixXd& distances, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("first_crossing: eps must be positive");
  std::optional<CrossingCell> best;
  auto key = [](const CrossingCell& c) {
    return std::make_tuple(std::min(c.t_m, c.t_n), std::max(c.t_m, c.t_n), c.t_m);
  };
  // Scan in order of increasing min(i, j) and stop at the first ring holding a qualifying cell.
  const int rows = static_cast<int>(distances.rows());
  const int cols = static_cast<int>(distances.cols());
  for (int k = 0; k < std::max(rows, cols) && !best; ++k) {
    for (int j = k; j < cols && k < rows; ++j) {
      if (distances(k, j) <= eps) {
        CrossingCell c{k, j, distances(k, j)};
        if (!best || key(c) < key(*best)) best = c;
        break;
      }
    }
    for (int i = k; i < rows && k < cols; ++i) {
      if (distances(i, k) <= eps) {
        CrossingCell c{i, k, distances(i, k)};
        if (!best || key(c) < key(*best)) best = c;
        break;
      }
    }
  }
  return best;
}

Extrapolation extrapolate_hypothetical(const Trajectory& past, const Trajectory& future,
                                       const scene::AgentType& type) {
  if (past.positions.empty() || future.positions.empty()) {
    throw std::invalid_argument("extrapolate_hypothetical needs a nonempty past and future");
  }
  const double dt = future.dt;
  if (!(dt > 0.0)) throw std::invalid_argument("extrapolate_hypothetical: dt must be positive");

  const Point origin = past.back();
  std::vector<Point> deltas;
  deltas.reserve(future.size());
  Point prev = origin;
  for (const auto& p : future.positions) {
    deltas.push_back(p - prev);
    prev = p;
  }

  const double last_speed = past.size() >= 2 ? (past.back() - past[past.size() - 2]).norm() / dt : 0.0;
  const double floor = last_speed < type.avg_speed_mps ? type.avg_speed_mps : last_speed;

  // Direction fallback for stationary steps: last nonzero past displacement, or the next moving future step.
  std::optional<Point> direction;
  if (past.size() >= 2) {
    const Heading h = heading(past);
    if (!h.stationary) direction = Point(std::cos(h.angle), std::sin(h.angle));
  }
  if (!direction) {
    for (const auto& d : deltas) {
      if (d.norm() > kStationaryEps) {
        direction = d.normalized();
        break;
      }
    }
  }
  if (!direction) return {future, true};

  Extrapolation out;
  out.trajectory.dt = dt;
  out.trajectory.positions.reserve(future.size());
  Point pos = origin;
  for (const auto& d : deltas) {
    const double len = d.norm();
    Point step = d;
    if (len > kStationaryEps) direction = d / len;
    if (len / dt < floor) step = *direction * (floor * dt);
    pos += step;
    out.trajectory.positions.push_back(pos);
  }
  return out;
}

}  // namespace gmop::geom
