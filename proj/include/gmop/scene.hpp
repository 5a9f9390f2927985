#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gmop::scene {

using Point = Eigen::Vector2d;
using AgentId = std::int64_t;

enum class AgentKind { Vehicle = 0, Motorcycle = 1, Bicycle = 2, Pedestrian = 3 };
inline constexpr int kNumAgentKinds = 4;

std::string_view kind_name(AgentKind kind);
AgentKind parse_kind(std::string_view name);

struct AgentType {
  AgentKind kind;
  double avg_width_m;
  double avg_speed_mps;
};

// Per-kind width and average speed. Values are configurable; the defaults are urban guideline numbers.
class AgentTypeTable {
 public:
  AgentTypeTable();
  const AgentType& operator[](AgentKind kind) const { return types_[static_cast<int>(kind)]; }
  void set(AgentKind kind, double avg_width_m, double avg_speed_mps);
  double max_width() const;

 private:
  std::array<AgentType, kNumAgentKinds> types_;
};

struct Trajectory {
  std::vector<Point> positions;
  double dt = 0.1;

  std::size_t size() const { return positions.size(); }
  const Point& operator[](std::size_t i) const { return positions[i]; }
  const Point& back() const { return positions.back(); }
};

struct Agent {
  AgentId id = 0;
  AgentKind kind = AgentKind::Vehicle;
  Trajectory past;
  Trajectory future;
};

// Generator ground truth: `influencer` passes the shared conflict point before `influencee`.
struct Interaction {
  AgentId influencer = 0;
  AgentId influencee = 0;
  Point conflict = Point::Zero();
};

struct Annotations {
  std::string scenario;
  std::vector<AgentId> priority;  // passing order, first agent has right of way
  std::vector<Interaction> interactions;
};

struct Scene {
  std::string scene_id;
  double sampling_hz = 10.0;
  std::vector<Agent> agents;
  std::optional<Annotations> annotations;

  std::size_t num_agents() const { return agents.size(); }
  std::size_t n_past() const { return agents.empty() ? 0 : agents.front().past.size(); }
  std::size_t n_future() const { return agents.empty() ? 0 : agents.front().future.size(); }
  double dt() const { return 1.0 / sampling_hz; }
  std::optional<std::size_t> index_of(AgentId id) const;
};

// A scene with the futures removed. Inference-time code paths only ever see this type.
struct ObservedAgent {
  AgentId id = 0;
  AgentKind kind = AgentKind::Vehicle;
  Trajectory past;
};

struct ObservedScene {
  std::string scene_id;
  double sampling_hz = 10.0;
  std::vector<ObservedAgent> agents;

  std::size_t num_agents() const { return agents.size(); }
  std::size_t n_past() const { return agents.empty() ? 0 : agents.front().past.size(); }
  double dt() const { return 1.0 / sampling_hz; }
};

ObservedScene observe(const Scene& scene);

// One joint prediction or ground truth: positions indexed [agent][future step].
using SceneSample = std::vector<std::vector<Point>>;

SceneSample future_positions(const Scene& scene);

// Throws ValidationError when any Scene invariant is broken.
void validate(const Scene& scene);

struct DisplacementSeq {
  std::vector<Point> deltas;
  Point origin = Point::Zero();
  // Rounding error of each subtraction, so reconstruction is bit-exact. Empty means zero.
  std::vector<Point> residuals;
};

DisplacementSeq to_displacements(const Trajectory& traj);
Trajectory from_displacements(const DisplacementSeq& seq, double dt);

// JSON-lines scene files. The first line is a format header; each following line is one scene.
std::vector<Scene> load_scenes(const std::filesystem::path& path);
void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);

std::vector<Scene> parse_scenes(std::string_view text);
std::string serialize_scenes(const std::vector<Scene>& scenes);

// 64-bit FNV-1a, used for data fingerprints and per-scene seeds.
std::uint64_t fnv1a_64(std::string_view data);

std::pair<std::vector<Scene>, std::vector<Scene>> split_dataset(const std::vector<Scene>& scenes,
                                                                double train_fraction,
                                                                std::uint64_t seed);

}  // namespace gmop::scene
