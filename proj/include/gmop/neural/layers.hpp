#pragma once

#include "gmop/neural/params.hpp"
#include "gmop/neural/tape.hpp"

#include <random>
#include <string>
#include <vector>

namespace gmop::neural {

enum class Activation { Identity, Tanh, Relu };

Var activate(Tape& tape, Var x, Activation act);

// y = act(W x + b). Weights Glorot-uniform, bias zero.
struct Dense {
  ParamId w = 0;
  ParamId b = 0;
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Activation act = Activation::Identity;

  static Dense create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
                      std::mt19937_64& rng);
  Var forward(Tape& tape, ParamStore& store, Var x) const;
};

// Gated recurrent cell; gate blocks are stacked [update, reset, candidate].
struct GruCell {
  ParamId w = 0;  // 3H x in
  ParamId u = 0;  // 3H x H, orthogonal blocks
  ParamId b = 0;  // 3H
  Eigen::Index in = 0;
  Eigen::Index hidden = 0;

  static GruCell create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                        std::mt19937_64& rng);
  Var step(Tape& tape, ParamStore& store, Var x, Var h) const;
};

// Runs the cell over `seq` from a zero state and returns the final hidden state.
Var gru_encode(Tape& tape, ParamStore& store, const GruCell& cell, const std::vector<Var>& seq);

// Autoregressive rollout: each step feeds the previous output (zeros at the start) and projects
// the new hidden state through `head`.
std::vector<Var> gru_decode(Tape& tape, ParamStore& store, const GruCell& cell, const Dense& head, Var h,
                            int steps);

// -w[c] * log(max(p[c], 1e-12))
Var weighted_cross_entropy(Tape& tape, Var probs, int true_class, const std::vector<double>& class_weights);

}  // namespace gmop::neural
