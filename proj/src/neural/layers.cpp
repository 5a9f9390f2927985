#include "gmop/neural/layers.hpp"

#include "gmop/error.hpp"

#include <stdexcept>

namespace gmop::neural {

Var activate(Tape& tape, Var x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Tanh: return tape.tanh(x);
    case Activation::Relu: return tape.relu(x);
  }
  return x;
}

Dense Dense::create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
                    std::mt19937_64& rng) {
  Dense d;
  d.in = in;
  d.out = out;
  d.act = act;
  d.w = store.add(name + ".w", glorot_uniform(out, in, rng));
  d.b = store.add(name + ".b", Mat::Zero(out, 1));
  return d;
}

Var Dense::forward(Tape& tape, ParamStore& store, Var x) const {
  return activate(tape, tape.affine(store[w], &store[b], x), act);
}

GruCell GruCell::create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                        std::mt19937_64& rng) {
  GruCell c;
  c.in = in;
  c.hidden = hidden;
  Mat w(3 * hidden, in);
  for (int k = 0; k < 3; ++k) w.block(k * hidden, 0, hidden, in) = glorot_uniform(hidden, in, rng);
  c.w = store.add(name + ".w", std::move(w));
  c.u = store.add(name + ".u", orthogonal_blocks(3 * hidden, hidden, rng));
  c.b = store.add(name + ".b", Mat::Zero(3 * hidden, 1));
  return c;
}

Var GruCell::step(Tape& tape, ParamStore& store, Var x, Var h) const {
  return tape.gru_step(store[w], store[u], store[b], x, h);
}

Var gru_encode(Tape& tape, ParamStore& store, const GruCell& cell, const std::vector<Var>& seq) {
  if (seq.empty()) throw std::invalid_argument("gru_encode: empty sequence");
  Var h = tape.constant(Vec::Zero(cell.hidden));
  for (auto x : seq) h = cell.step(tape, store, x, h);
  return h;
}

std::vector<Var> gru_decode(Tape& tape, ParamStore& store, const GruCell& cell, const Dense& head, Var h,
                            int steps) {
  if (steps < 1) throw std::invalid_argument("gru_decode: steps must be at least 1");
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(steps));
  Var prev = tape.constant(Vec::Zero(cell.in));
  for (int t = 0; t < steps; ++t) {
    h = cell.step(tape, store, prev, h);
    prev = head.forward(tape, store, h);
    out.push_back(prev);
  }
  return out;
}

Var weighted_cross_entropy(Tape& tape, Var probs, int true_class, const std::vector<double>& class_weights) {
  const auto n = tape.value(probs).size();
  if (static_cast<Eigen::Index>(class_weights.size()) != n) throw ShapeError("class weight count differs from classes");
  if (true_class < 0 || true_class >= n) throw std::invalid_argument("true class out of range");
  const Var logp = tape.log(tape.pick(probs, true_class), 1e-12);
  return tape.scale(logp, -class_weights[static_cast<std::size_t>(true_class)]);
}

}  // namespace gmop::neural
