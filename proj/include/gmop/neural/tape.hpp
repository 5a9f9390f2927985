#pragma once

#include "gmop/neural/params.hpp"

#include <functional>
#include <vector>

namespace gmop::neural {

// Handle to a vector value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation over vector-valued nodes. Parameter gradients are accumulated
// straight into Param::grad during backward(); frozen (non-trainable) parameters are skipped.
// A tape built with record=false only evaluates values.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  const Vec& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  double scalar(Var v) const;
  // Gradient of the last backward() target with respect to `v` (zero if unreached).
  Vec grad(Var v) const;

  Var constant(Vec v);
  // Column-major flattening of the parameter matrix.
  Var param(Param& p);

  // W x + b (b may be null).
  Var affine(Param& w, Param* b, Var x);
  // Gated recurrent update with stacked gate blocks [z, r, n]:
  // z = sig(Wz x + bz + Uz h), r = sig(Wr x + br + Ur h), n = tanh(Wn x + bn + r * (Un h)),
  // h' = (1 - z) * n + z * h.
  Var gru_step(Param& w, Param& u, Param& b, Var x, Var h);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  // Multiplies vector `v` by the single entry of `s`.
  Var scalar_mul(Var s, Var v);

  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  // log(max(a, floor)); the gradient is zero where the floor is active.
  Var log(Var a, double floor);
  Var square(Var a);

  Var concat(const std::vector<Var>& parts);
  Var slice(Var a, Eigen::Index start, Eigen::Index len);
  // out[i] = a[index[i]]
  Var gather(Var a, const std::vector<int>& index);
  Var sum(Var a);
  Var pick(Var a, Eigen::Index i);
  // Max-subtracted softmax.
  Var softmax(Var a);

  // Runs the reverse sweep from a scalar node.
  void backward(Var loss);

 private:
  using Backward = std::function<void(Tape&, const Vec&)>;
  struct Node {
    Vec value;
    Vec grad;
    Backward back;
  };

  Var push(Vec value, Backward back);
  void accumulate(Var v, const Vec& g);

  bool record_;
  std::vector<Node> nodes_;
};

// Plain-value softmax with max subtraction.
Vec softmax(const Vec& x);

}  // namespace gmop::neural
