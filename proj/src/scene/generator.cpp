#include "gmop/generator.hpp"

#include "gmop/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

namespace gmop::scene {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLaneOffset = 1.75;  // half of a 3.5 m lane
constexpr double kLaneWidth = 3.5;
constexpr double kSampleStep = 0.25;  // path sampling for conflict search
constexpr double kClearMargin = 0.2;  // seconds between leader leaving and follower entering a conflict zone
constexpr int kMaxAttempts = 500;

// Polyline parameterized by arc length, extended linearly past both ends.
class Path {
 public:
  explicit Path(std::vector<Point> pts) : pts_(std::move(pts)) {
    cum_.push_back(0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) cum_.push_back(cum_.back() + (pts_[i] - pts_[i - 1]).norm());
  }

  Point at(double s) const {
    if (s <= 0.0) return pts_[0] + s * dir(0);
    if (s >= cum_.back()) return pts_.back() + (s - cum_.back()) * dir(pts_.size() - 2);
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    const auto i = static_cast<std::size_t>(it - cum_.begin()) - 1;
    const double f = (s - cum_[i]) / (cum_[i + 1] - cum_[i]);
    return pts_[i] + f * (pts_[i + 1] - pts_[i]);
  }

 private:
  Point dir(std::size_t seg) const { return (pts_[seg + 1] - pts_[seg]).normalized(); }

  std::vector<Point> pts_;
  std::vector<double> cum_;
};

// Constant speed until `s_release`, then `v_post`.
struct SpeedProfile {
  double s0 = 0.0;
  double v_slow = 1.0;
  double s_release = 0.0;
  double v_post = 1.0;

  double release_time() const { return std::max(0.0, (s_release - s0) / v_slow); }

  double position(double t) const {
    if (t <= 0.0) return s0 + v_slow * t;  // not used for the past; kept continuous
    const double tr = release_time();
    if (t <= tr) return s0 + v_slow * t;
    return std::max(s0, s_release) + v_post * (t - tr);
  }

  double time_at(double s) const {
    if (s <= s_release) return (s - s0) / v_slow;
    return release_time() + (s - std::max(s0, s_release)) / v_post;
  }
};

struct PlannedAgent {
  AgentKind kind = AgentKind::Vehicle;
  Path path{{Point::Zero(), Point(1.0, 0.0)}};
  double s0 = 0.0;
  double v_free = 1.0;
  // Arc length of the point that decides right of way (intersection center, merge or entry point).
  double ref_s = std::numeric_limits<double>::quiet_NaN();
};

struct Conflict {
  std::size_t a = 0, b = 0;
  double s_a = 0.0, s_b = 0.0;              // arc length of the conflict point on each path
  double enter_a = 0.0, enter_b = 0.0;      // arc length where each path enters the conflict zone
  bool shared = false;                      // paths stay together after the conflict (merge)
  Point point = Point::Zero();
};

Point rotate(const Point& p, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

Point unit(double theta) { return {std::cos(theta), std::sin(theta)}; }

class SceneBuilder {
 public:
  SceneBuilder(const GeneratorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {
    horizon_s_ = cfg.n_future / cfg.sampling_hz;
    zone_ = cfg.types.max_width() + 0.5;
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  AgentKind draw_kind(bool allow_pedestrian) {
    // vehicle, motorcycle, bicycle, pedestrian
    std::discrete_distribution<int> d =
        allow_pedestrian ? std::discrete_distribution<int>{0.5, 0.2, 0.15, 0.15}
                         : std::discrete_distribution<int>{0.6, 0.25, 0.15, 0.0};
    return static_cast<AgentKind>(d(rng_));
  }

  double draw_speed(AgentKind kind) { return cfg_.types[kind].avg_speed_mps * uniform(0.8, 1.2); }

  // Distance to the conflict area so the free-flow arrival falls early in the future window.
  double draw_approach_distance(double v, double min_distance) {
    return std::max(min_distance, v * uniform(0.12, 0.4) * horizon_s_);
  }

  // `max_core` caps how many agents meet at the intersection; the rest become bystanders.
  std::optional<Scene> attempt(ScenarioTemplate tmpl, int n_agents, int max_core, const std::string& scene_id) {
    agents_.clear();
    const double theta = uniform(-kPi, kPi);
    const Point center(uniform(-50.0, 50.0), uniform(-50.0, 50.0));
    switch (tmpl) {
      case ScenarioTemplate::CrossingIntersection: build_crossing(n_agents, max_core, theta, center); break;
      case ScenarioTemplate::Merge: build_merge(n_agents, theta, center); break;
      case ScenarioTemplate::RoundaboutEntry: build_roundabout(n_agents, theta, center); break;
      case ScenarioTemplate::IndependentLanes: build_independent(n_agents, theta, center); break;
    }
    return plan_and_roll_out(tmpl, scene_id);
  }

 private:
  void build_crossing(int n, int max_core, double theta, const Point& center) {
    // The first two arms are perpendicular so every crossing scene has at least one conflict.
    const int first = uniform_int(0, 3);
    const int second = (first + (uniform_int(0, 1) ? 1 : 3)) % 4;
    std::vector<int> arms = {first, second};
    std::vector<int> rest;
    for (int k = 0; k < 4; ++k) {
      if (k != first && k != second) rest.push_back(k);
    }
    std::shuffle(rest.begin(), rest.end(), rng_);
    arms.insert(arms.end(), rest.begin(), rest.end());
    const int core = std::min({n, 4, max_core});
    for (int k = 0; k < core; ++k) {
      const double psi = theta + arms[static_cast<std::size_t>(k)] * kPi / 2.0;
      const Point u = unit(psi);
      const Point right(u.y(), -u.x());
      const Point through = center + kLaneOffset * right;
      PlannedAgent a;
      a.kind = draw_kind(false);
      a.v_free = draw_speed(a.kind);
      constexpr double kHalf = 400.0;
      a.path = Path({through - kHalf * u, through + kHalf * u});
      a.s0 = kHalf - draw_approach_distance(a.v_free, zone_ + kLaneOffset + 1.0);
      a.ref_s = kHalf;
      agents_.push_back(std::move(a));
    }
    add_bystanders(n - core, theta, center, 60.0);
  }

  void build_merge(int n, double theta, const Point& center) {
    const Point u = unit(theta);
    constexpr double kLen = 400.0;
    const int core = std::min(n, 2);
    // Main lane through the merge point.
    PlannedAgent main;
    main.kind = draw_kind(false);
    main.v_free = draw_speed(main.kind);
    main.path = Path({center - kLen * u, center + kLen * u});
    main.s0 = kLen - draw_approach_distance(main.v_free, zone_ + 2.0);
    main.ref_s = kLen;
    agents_.push_back(std::move(main));
    if (core > 1) {
      // Ramp joining from the right.
      const double beta = uniform(20.0, 40.0) * kPi / 180.0;
      const Point ramp_dir = unit(theta + beta);
      PlannedAgent ramp;
      ramp.kind = draw_kind(false);
      ramp.v_free = draw_speed(ramp.kind);
      ramp.path = Path({center - kLen * ramp_dir, center, center + kLen * u});
      ramp.s0 = kLen - draw_approach_distance(ramp.v_free, zone_ / std::sin(beta) + 2.0);
      ramp.ref_s = kLen;
      agents_.push_back(std::move(ramp));
    }
    // The ramp lies on the right; bystanders use lanes on the left.
    add_parallel_lanes(n - core, theta, center + 2.0 * kLaneWidth * Point(-u.y(), u.x()), 1.0);
  }

  void build_roundabout(int n, double theta, const Point& center) {
    const double radius = uniform(12.0, 20.0);
    const int core = std::min(n, 2);
    // Circle sampled counter-clockwise; the entry point sits at angle -pi/2 (local frame).
    const auto circle_point = [&](double phi) -> Point { return center + rotate(radius * unit(phi), theta); };
    const double ds_phi = 0.25 / radius;
    const double entry_phi = -kPi / 2.0;
    PlannedAgent circ;
    circ.kind = draw_kind(false);
    circ.v_free = draw_speed(circ.kind);
    {
      std::vector<Point> pts;
      const double start = entry_phi - 1.5 * kPi;
      for (double phi = start; phi <= entry_phi + 1.5 * kPi; phi += ds_phi) pts.push_back(circle_point(phi));
      circ.path = Path(std::move(pts));
      const double s_entry = (entry_phi - start) * radius;
      circ.s0 = s_entry - draw_approach_distance(circ.v_free, zone_ + 2.0);
      circ.ref_s = s_entry;
    }
    agents_.push_back(std::move(circ));
    if (core > 1) {
      const double beta = uniform(35.0, 60.0) * kPi / 180.0;
      const Point entry = circle_point(entry_phi);
      const Point approach_dir = rotate(unit(beta), theta);
      constexpr double kLen = 300.0;
      std::vector<Point> pts = {entry - kLen * approach_dir};
      for (double phi = entry_phi; phi <= entry_phi + 1.5 * kPi; phi += ds_phi) pts.push_back(circle_point(phi));
      PlannedAgent in;
      in.kind = draw_kind(false);
      in.v_free = draw_speed(in.kind);
      in.path = Path(std::move(pts));
      in.s0 = kLen - draw_approach_distance(in.v_free, zone_ / std::sin(beta) + 2.0);
      in.ref_s = kLen;
      agents_.push_back(std::move(in));
    }
    // Lanes well outside the circle, on the side opposite the entry.
    const Point up = rotate(Point(0.0, 1.0), theta);
    add_parallel_lanes(n - core, theta, center + (radius + 3.0 * kLaneWidth) * up, 1.0);
  }

  void build_independent(int n, double theta, const Point& center) {
    add_parallel_lanes(n, theta, center, 1.0);
  }

  void add_bystanders(int n, double theta, const Point& center, double distance) {
    if (n <= 0) return;
    // Far away from the intersection, moving along a lane parallel to one arm but displaced sideways
    // beyond the reach of every other path within the horizon.
    const Point u = unit(theta + kPi / 4.0);
    const Point side(-u.y(), u.x());
    add_parallel_lanes(n, theta + kPi / 4.0, center + (distance + 10.0 * horizon_s_) * side, 1.0);
  }

  // `n` agents on lanes parallel to direction theta, stacked in direction `sign * left`.
  void add_parallel_lanes(int n, double theta, const Point& base, double sign) {
    const Point u = unit(theta);
    const Point left(-u.y(), u.x());
    constexpr double kLen = 400.0;
    for (int k = 0; k < n; ++k) {
      PlannedAgent a;
      a.kind = draw_kind(true);
      a.v_free = draw_speed(a.kind);
      const Point through = base + sign * (k * kLaneWidth + uniform(0.0, 0.3)) * left;
      a.path = Path({through - kLen * u, through + kLen * u});
      a.s0 = kLen + uniform(-15.0, 15.0);
      agents_.push_back(std::move(a));
    }
  }

  std::optional<Conflict> find_conflict(std::size_t ia, std::size_t ib) const {
    const auto& A = agents_[ia];
    const auto& B = agents_[ib];
    const double reach_a = A.v_free * horizon_s_ + zone_ + 2.0;
    const double reach_b = B.v_free * horizon_s_ + zone_ + 2.0;
    std::vector<Point> pa, pb;
    for (double s = 0.0; s <= reach_a; s += kSampleStep) pa.push_back(A.path.at(A.s0 + s));
    for (double s = 0.0; s <= reach_b; s += kSampleStep) pb.push_back(B.path.at(B.s0 + s));

    const double zone2 = zone_ * zone_;
    std::size_t enter_a = pa.size(), enter_b = pb.size();
    double best_touch = std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();
    std::size_t touch_i = 0, touch_j = 0, close_i = 0, close_j = 0;
    bool touched = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t j = 0; j < pb.size(); ++j) {
        const double d2 = (pa[i] - pb[j]).squaredNorm();
        if (d2 > zone2) continue;
        enter_a = std::min(enter_a, i);
        enter_b = std::min(enter_b, j);
        if (d2 < best_dist) {
          best_dist = d2;
          close_i = i;
          close_j = j;
        }
        if (d2 <= 0.3 * 0.3 && static_cast<double>(i + j) < best_touch) {
          best_touch = static_cast<double>(i + j);
          touch_i = i;
          touch_j = j;
          touched = true;
        }
      }
    }
    if (enter_a == pa.size()) return std::nullopt;
    Conflict c;
    c.a = ia;
    c.b = ib;
    const std::size_t ci = touched ? touch_i : close_i;
    const std::size_t cj = touched ? touch_j : close_j;
    c.s_a = A.s0 + static_cast<double>(ci) * kSampleStep;
    c.s_b = B.s0 + static_cast<double>(cj) * kSampleStep;
    c.enter_a = A.s0 + static_cast<double>(enter_a) * kSampleStep;
    c.enter_b = B.s0 + static_cast<double>(enter_b) * kSampleStep;
    c.point = 0.5 * (pa[ci] + pb[cj]);
    // Shared if the paths are still together a few meters after the conflict point.
    const Point after_a = A.path.at(c.s_a + 3.0 * zone_);
    const Point after_b = B.path.at(c.s_b + 3.0 * zone_);
    c.shared = (after_a - after_b).norm() < zone_;
    return c;
  }

  struct Plan {
    std::vector<SpeedProfile> profiles;
    Annotations annotations;
  };

  std::optional<Plan> plan_order(const std::vector<std::size_t>& order, const std::vector<Conflict>& conflicts) const {
    const std::size_t n = agents_.size();
    std::vector<std::size_t> rank(n);
    for (std::size_t k = 0; k < n; ++k) rank[order[k]] = k;

    std::vector<SpeedProfile> profiles(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t me = order[k];
      const auto& A = agents_[me];
      SpeedProfile p{A.s0, A.v_free, A.s0, A.v_free};
      for (const auto& c : conflicts) {
        if (c.a != me && c.b != me) continue;
        const std::size_t other = c.a == me ? c.b : c.a;
        if (rank[other] > k) continue;
        const double my_enter = c.a == me ? c.enter_a : c.enter_b;
        const double my_point = c.a == me ? c.s_a : c.s_b;
        const double their_point = c.a == me ? c.s_b : c.s_a;
        const auto& lead = profiles[other];
        const double clear = lead.time_at(their_point + zone_) + kClearMargin;
        const double room = my_enter - A.s0;
        if (room < 0.5) return std::nullopt;
        p.v_slow = std::min(p.v_slow, room / clear);
        p.s_release = std::max(p.s_release, my_point);
        if (c.shared) p.v_post = std::min(p.v_post, agents_[other].v_free);
      }
      if (p.v_slow < 0.05) return std::nullopt;
      profiles[me] = p;
    }

    // Every yield must resolve inside the prediction window.
    Annotations ann;
    for (auto i : order) ann.priority.push_back(static_cast<AgentId>(i));
    for (const auto& c : conflicts) {
      const bool a_first = rank[c.a] < rank[c.b];
      const std::size_t lead = a_first ? c.a : c.b;
      const std::size_t follow = a_first ? c.b : c.a;
      const double follow_point = a_first ? c.s_b : c.s_a;
      const double lead_point = a_first ? c.s_a : c.s_b;
      if (profiles[lead].time_at(lead_point) <= 0.0) return std::nullopt;
      if (profiles[follow].time_at(follow_point + zone_) > horizon_s_ - 2.0 / cfg_.sampling_hz) return std::nullopt;
      ann.interactions.push_back({static_cast<AgentId>(lead), static_cast<AgentId>(follow), c.point});
    }

    return Plan{std::move(profiles), std::move(ann)};
  }

  std::optional<Scene> plan_and_roll_out(ScenarioTemplate tmpl, const std::string& scene_id) {
    const std::size_t n = agents_.size();
    std::vector<Conflict> conflicts;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (auto c = find_conflict(a, b)) conflicts.push_back(*c);
      }
    }

    // Free-flow arrival at each agent's right-of-way reference point.
    std::vector<double> free_ref(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isfinite(agents_[i].ref_s)) free_ref[i] = (agents_[i].ref_s - agents_[i].s0) / agents_[i].v_free;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::optional<Plan> plan;
    if (uniform(0.0, 1.0) < cfg_.random_priority_prob) {
      std::shuffle(order.begin(), order.end(), rng_);
      // Both the drawn order and its reverse must be feasible so the past does not reveal the outcome.
      if (!plan_order({order.rbegin(), order.rend()}, conflicts)) return std::nullopt;
      plan = plan_order(order, conflicts);
    } else {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t x, std::size_t y) { return free_ref[x] < free_ref[y]; });
      // Near-simultaneous arrivals have no clear right of way; draw again.
      for (const auto& c : conflicts) {
        if (std::abs(free_ref[c.a] - free_ref[c.b]) < 0.05 * horizon_s_) return std::nullopt;
      }
      plan = plan_order(order, conflicts);
    }
    if (!plan) return std::nullopt;
    const auto& profiles = plan->profiles;
    Annotations ann = std::move(plan->annotations);
    ann.scenario = std::string(template_name(tmpl));

    Scene scene;
    scene.scene_id = scene_id;
    scene.sampling_hz = cfg_.sampling_hz;
    const double dt = 1.0 / cfg_.sampling_hz;
    std::normal_distribution<double> noise(0.0, cfg_.noise_std);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& A = agents_[i];
      Agent out;
      out.id = static_cast<AgentId>(i);
      out.kind = A.kind;
      out.past.dt = out.future.dt = dt;
      for (int k = 0; k < cfg_.n_past; ++k) {
        const double t = -static_cast<double>(cfg_.n_past - 1 - k) * dt;
        out.past.positions.push_back(A.path.at(A.s0 + A.v_free * t));
      }
      for (int k = 1; k <= cfg_.n_future; ++k) {
        out.future.positions.push_back(A.path.at(profiles[i].position(k * dt)));
      }
      if (cfg_.noise_std > 0.0) {
        for (auto* traj : {&out.past, &out.future}) {
          for (auto& p : traj->positions) p += Point(noise(rng_), noise(rng_));
        }
      }
      scene.agents.push_back(std::move(out));
    }
    scene.annotations = std::move(ann);
    return scene;
  }

  const GeneratorConfig& cfg_;
  std::mt19937_64& rng_;
  double horizon_s_;
  double zone_;
  std::vector<PlannedAgent> agents_;
};

}  // namespace

std::string_view template_name(ScenarioTemplate t) {
  switch (t) {
    case ScenarioTemplate::CrossingIntersection: return "crossing-intersection";
    case ScenarioTemplate::Merge: return "merge";
    case ScenarioTemplate::RoundaboutEntry: return "roundabout-entry";
    case ScenarioTemplate::IndependentLanes: return "independent-lanes";
  }
  return "unknown";
}

ScenarioTemplate parse_template(std::string_view name) {
  for (auto t : {ScenarioTemplate::CrossingIntersection, ScenarioTemplate::Merge, ScenarioTemplate::RoundaboutEntry,
                 ScenarioTemplate::IndependentLanes}) {
    if (template_name(t) == name) return t;
  }
  throw ConfigError("unknown scenario template '" + std::string(name) + "'");
}

const std::vector<HorizonPreset>& horizon_presets() {
  static const std::vector<HorizonPreset> presets = {
      {"argoverse-like", 50, 60, 10.0},
      {"interaction-like", 10, 30, 10.0},
      {"nuscenes-like", 4, 12, 2.0},
      {"round-like", 15, 25, 5.0},
  };
  return presets;
}

const HorizonPreset& horizon_preset(std::string_view name) {
  for (const auto& p : horizon_presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown horizon preset '" + std::string(name) + "'");
}

void GeneratorConfig::apply_preset(const HorizonPreset& preset) {
  n_past = preset.n_past;
  n_future = preset.n_future;
  sampling_hz = preset.sampling_hz;
}

void GeneratorConfig::validate() const {
  if (templates.empty()) throw ConfigError("at least one scenario template is required");
  if (count < 1) throw ConfigError("scene count must be at least 1");
  if (min_agents < 1 || max_agents < min_agents) throw ConfigError("agent-count range is empty");
  if (n_past < 2 || n_future < 1) throw ConfigError("horizons must be n_past >= 2 and n_future >= 1");
  if (!(sampling_hz > 0.0)) throw ConfigError("sampling_hz must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  if (!(random_priority_prob >= 0.0 && random_priority_prob <= 1.0)) {
    throw ConfigError("random_priority_prob must lie in [0, 1]");
  }
}

std::vector<Scene> generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const ScenarioTemplate tmpl = config.templates[static_cast<std::size_t>(i) % config.templates.size()];
    SceneBuilder builder(config, rng);
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%06d", std::string(template_name(tmpl)).c_str(), i);
    std::optional<Scene> scene;
    for (int attempt = 0; attempt < kMaxAttempts && !scene; ++attempt) {
      const int n_agents = builder.uniform_int(config.min_agents, config.max_agents);
      // Dense four-way conflicts may not resolve within short horizons; shrink the core over time.
      const int max_core = std::max(2, 4 - attempt / (kMaxAttempts / 5));
      scene = builder.attempt(tmpl, n_agents, max_core, id);
    }
    if (!scene) {
      throw ConfigError("could not place a feasible " + std::string(template_name(tmpl)) +
                        " scene within the horizon; lengthen n_future or reduce the agent count");
    }
    scenes.push_back(std::move(*scene));
  }
  return scenes;
}

}  // namespace gmop::scene
