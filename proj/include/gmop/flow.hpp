#pragma once

#include "gmop/neural/layers.hpp"
#include "gmop/neural/params.hpp"
#include "gmop/neural/tape.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gmop::flow {

using neural::Mat;
using neural::ParamStore;
using neural::Tape;
using neural::Var;
using neural::Vec;

struct FlowConfig {
  int dim = 16;
  int cond_dim = 0;
  int layers = 8;
  int hidden = 64;
  // Log-scales pass through clamp * tanh(raw / clamp).
  double scale_clamp = 5.0;
  // Zero the last conditioner layer so every coupling starts as the identity.
  bool identity_init = false;
};

// Conditional affine coupling: permute, keep the first block, scale and shift the second block
// with a conditioner MLP fed [kept block, conditioning].
struct CouplingLayer {
  std::vector<int> perm;
  std::vector<int> inv_perm;
  int split = 0;
  neural::Dense h1, h2, out;
};

struct FlowOutput {
  Var z;
  Var logdet;
};

class FlowStack {
 public:
  FlowStack() = default;
  FlowStack(const FlowConfig& config, ParamStore& store, const std::string& prefix, std::mt19937_64& rng);

  const FlowConfig& config() const { return config_; }
  int dim() const { return config_.dim; }
  int cond_dim() const { return config_.cond_dim; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }

  // Normalizing direction y -> z with log|det dz/dy|.
  FlowOutput forward(Tape& tape, ParamStore& store, Var y, Var cond) const;
  // Generative direction z -> y; `logdet` receives log|det dy/dz| when given.
  Var inverse(Tape& tape, ParamStore& store, Var z, Var cond, Var* logdet = nullptr) const;
  // log p0(F(y)) + log|det J_F(y)|
  Var log_prob(Tape& tape, ParamStore& store, Var y, Var cond) const;

  std::pair<Vec, double> forward_normalize(ParamStore& store, const Vec& y, const Vec& cond) const;
  std::pair<Vec, double> inverse_generate(ParamStore& store, const Vec& z, const Vec& cond) const;
  double log_prob(ParamStore& store, const Vec& y, const Vec& cond) const;
  // `count` standard-normal draws from a generator seeded with `seed`, mapped through the inverse.
  std::vector<Vec> sample(ParamStore& store, const Vec& cond, int count, std::uint64_t seed) const;
  // Same, drawing from a caller-owned generator.
  Vec sample_one(ParamStore& store, const Vec& cond, std::mt19937_64& rng) const;

 private:
  void check_dims(const Tape& tape, Var v, Var cond) const;
  // Log-scale and shift for the transformed block.
  std::pair<Var, Var> conditioner(Tape& tape, ParamStore& store, const CouplingLayer& layer, Var kept,
                                  Var cond) const;

  FlowConfig config_;
  std::vector<CouplingLayer> layers_;
};

// Standard normal log-density.
double base_log_density(const Vec& z);
Var base_log_density(Tape& tape, Var z);

// Mean of -log_prob over (y, cond) pairs.
Var nll_loss(Tape& tape, ParamStore& store, const FlowStack& flow, const std::vector<std::pair<Var, Var>>& batch);

}  // namespace gmop::flow
