#pragma once

#include "gmop/graphs.hpp"
#include "gmop/neural/layers.hpp"
#include "gmop/scene.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gmop::model {

using neural::ParamStore;
using neural::Tape;
using neural::Var;
using neural::Vec;

struct ContextConfig {
  int past_hidden = 32;
  int context_dim = 32;
  int message_dim = 32;
  int depth = 1;
  double distance_scale = 10.0;
};

// Per-agent past encoder followed by weighted message passing along graph edges (src -> dst).
// Round k: h_a <- tanh(W_self h_a + b + sum over edges m->a of w * tanh(W_msg [h_m, geometry] + b_msg)).
// Geometry is m's position, last displacement and heading relative to agent a's frame.
class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(const ContextConfig& config, ParamStore& store, const std::string& prefix, std::mt19937_64& rng);

  const ContextConfig& config() const { return config_; }
  int output_dim() const { return config_.context_dim; }

  // `edge_weights` is aligned with graph.edges(); when empty the stored edge weights are used.
  // Throws std::invalid_argument when graph nodes differ from the scene agent ids.
  std::vector<Var> encode(Tape& tape, ParamStore& store, const scene::ObservedScene& scene,
                          const graphs::InteractionGraph& graph, const std::vector<Var>& edge_weights = {}) const;

  // Scale applied to past displacements before encoding. Stored as a frozen parameter.
  double past_scale(const ParamStore& store) const;
  void set_past_scale(ParamStore& store, double scale) const;

 private:
  struct Round {
    neural::Dense self;
    neural::Dense message;
  };

  ContextConfig config_;
  neural::GruCell past_;
  std::vector<Round> rounds_;
  neural::ParamId past_scale_ = 0;
};

// Root-mean-square of the past displacement components over all agents, floored at 1e-3.
double past_displacement_rms(const std::vector<scene::Scene>& scenes);

}  // namespace gmop::model
