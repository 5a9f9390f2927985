#pragma once

#include "gmop/scene.hpp"

#include <Eigen/Core>

#include <optional>

namespace gmop::geom {

using scene::Point;
using scene::Trajectory;

// Displacements shorter than this count as standing still.
inline constexpr double kStationaryEps = 1e-9;

struct Heading {
  double angle = 0.0;  // radians in (-pi, pi]
  bool stationary = false;
};

// Direction of the last nonzero displacement. Throws std::invalid_argument for fewer than 2 points.
Heading heading(const Trajectory& traj);

struct ApproachAngle {
  double alpha = 0.0;  // [0, pi]
  bool degenerate = false;
};

// Angle between a distance vector and a displacement; a zero-length input yields pi/2 flagged degenerate.
ApproachAngle approach_angle(const Point& d, const Point& displacement);

// |x| reduced modulo 2*pi into [0, pi].
double wrap_abs_angle(double x);

// Angle at which an observer at `from` with heading `gamma` sees `to`, in [0, pi].
// Throws std::domain_error when the points coincide.
double viewing_angle(const Point& from, double gamma, const Point& to);

// D(i, j) = |a[i] - b[j]|. Throws ShapeError when the lengths differ.
Eigen::MatrixXd pairwise_distance_matrix(const Trajectory& a, const Trajectory& b);

struct CrossingCell {
  int t_m = 0;
  int t_n = 0;
  double distance = 0.0;
};

// Earliest-encounter qualifying cell: minimizes min(i, j), then max(i, j), then i.
std::optional<CrossingCell> first_crossing(const Eigen::MatrixXd& distances, double eps);

struct Extrapolation {
  Trajectory trajectory;
  bool degenerate = false;
};

// Speeds up slow steps of a ground-truth future while keeping each step's direction.
// The floor is the agent type's average speed when the last observed speed is below it,
// otherwise the last observed speed.
Extrapolation extrapolate_hypothetical(const Trajectory& past, const Trajectory& future,
                                       const scene::AgentType& type);

}  // namespace gmop::geom
