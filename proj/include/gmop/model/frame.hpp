#pragma once

#include "gmop/scene.hpp"

#include <vector>

namespace gmop::model {

using scene::Point;

// Rotation into an agent's heading frame, anchored at its last observed position.
// Stationary agents keep the global orientation.
struct AgentFrame {
  Point origin = Point::Zero();
  double cos_g = 1.0;
  double sin_g = 0.0;

  static AgentFrame of(const scene::Trajectory& past);

  Point to_local(const Point& v) const { return {cos_g * v.x() + sin_g * v.y(), -sin_g * v.x() + cos_g * v.y()}; }
  Point to_global(const Point& v) const { return {cos_g * v.x() - sin_g * v.y(), sin_g * v.x() + cos_g * v.y()}; }
};

// Step displacements of `positions` starting from `origin`, rotated into `frame`.
std::vector<Point> local_deltas(const AgentFrame& frame, const Point& origin, const std::vector<Point>& positions);

// Integrates local-frame displacements from the frame origin back to global positions.
std::vector<Point> integrate_local(const AgentFrame& frame, const std::vector<Point>& deltas);

}  // namespace gmop::model
