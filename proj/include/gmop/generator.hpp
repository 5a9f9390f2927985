#pragma once

#include "gmop/scene.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gmop::scene {

enum class ScenarioTemplate { CrossingIntersection, Merge, RoundaboutEntry, IndependentLanes };

std::string_view template_name(ScenarioTemplate t);
ScenarioTemplate parse_template(std::string_view name);

struct HorizonPreset {
  std::string name;
  int n_past;
  int n_future;
  double sampling_hz;
};

// argoverse-like, interaction-like, nuscenes-like, round-like.
const std::vector<HorizonPreset>& horizon_presets();
const HorizonPreset& horizon_preset(std::string_view name);

struct GeneratorConfig {
  std::vector<ScenarioTemplate> templates{ScenarioTemplate::CrossingIntersection};
  int count = 100;
  int min_agents = 2;
  int max_agents = 4;
  int n_past = 10;
  int n_future = 30;
  double sampling_hz = 10.0;
  double noise_std = 0.05;
  // Probability that the passing order of a scene is a coin flip instead of earliest free-flow arrival.
  // 1.0 yields a corpus where the same past admits both yield-or-go outcomes.
  double random_priority_prob = 0.0;
  AgentTypeTable types;

  void apply_preset(const HorizonPreset& preset);
  void validate() const;
};

// Scene i of the result only depends on (config, seed, i).
std::vector<Scene> generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace gmop::scene
