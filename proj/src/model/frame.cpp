#include "gmop/model/frame.hpp"

#include "gmop/geom.hpp"

#include <cmath>

namespace gmop::model {

AgentFrame AgentFrame::of(const scene::Trajectory& past) {
  AgentFrame f;
  f.origin = past.back();
  if (past.size() >= 2) {
    const auto h = geom::heading(past);
    if (!h.stationary) {
      f.cos_g = std::cos(h.angle);
      f.sin_g = std::sin(h.angle);
    }
  }
  return f;
}

std::vector<Point> local_deltas(const AgentFrame& frame, const Point& origin, const std::vector<Point>& positions) {
  std::vector<Point> out;
  out.reserve(positions.size());
  Point prev = origin;
  for (const auto& p : positions) {
    out.push_back(frame.to_local(p - prev));
    prev = p;
  }
  return out;
}

std::vector<Point> integrate_local(const AgentFrame& frame, const std::vector<Point>& deltas) {
  std::vector<Point> out;
  out.reserve(deltas.size());
  Point pos = frame.origin;
  for (const auto& d : deltas) {
    pos += frame.to_global(d);
    out.push_back(pos);
  }
  return out;
}

}  // namespace gmop::model
