#include "gmop/neural/tape.hpp"

#include "gmop/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gmop::neural {

namespace {

void check_same(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

Eigen::Map<const Vec> flat(const Mat& m) { return {m.data(), m.size()}; }

Vec logistic(const Vec& x) { return ((-x.array()).exp() + 1.0).inverse().matrix(); }

}  // namespace

double Tape::scalar(Var v) const {
  const Vec& x = value(v);
  if (x.size() != 1) throw ShapeError("expected a scalar node, got size " + std::to_string(x.size()));
  return x(0);
}

Vec Tape::grad(Var v) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.grad.size() ? n.grad : Vec::Zero(n.value.size());
}

Var Tape::push(Vec value, Backward back) {
  Node n;
  n.value = std::move(value);
  if (record_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Vec& g) {
  auto& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Vec v) { return push(std::move(v), nullptr); }

Var Tape::param(Param& p) {
  Param* pp = &p;
  return push(flat(p.value), [pp](Tape&, const Vec& g) {
    if (pp->trainable) Eigen::Map<Vec>(pp->grad.data(), pp->grad.size()) += g;
  });
}

Var Tape::affine(Param& w, Param* b, Var x) {
  const Vec& xv = value(x);
  if (w.value.cols() != xv.size()) {
    throw ShapeError("affine '" + w.name + "': expects input " + std::to_string(w.value.cols()) + ", got " +
                     std::to_string(xv.size()));
  }
  Vec y = w.value * xv;
  if (b) y += flat(b->value);
  Param* wp = &w;
  return push(std::move(y), [wp, b, x](Tape& t, const Vec& g) {
    const Vec& xv = t.value(x);
    if (wp->trainable) wp->grad.noalias() += g * xv.transpose();
    if (b && b->trainable) Eigen::Map<Vec>(b->grad.data(), b->grad.size()) += g;
    t.accumulate(x, wp->value.transpose() * g);
  });
}

Var Tape::gru_step(Param& w, Param& u, Param& b, Var x, Var h) {
  const Vec& xv = value(x);
  const Vec& hv = value(h);
  const Eigen::Index H = hv.size();
  if (w.value.rows() != 3 * H || u.value.rows() != 3 * H || u.value.cols() != H || w.value.cols() != xv.size()) {
    throw ShapeError("gru_step '" + w.name + "': shape mismatch");
  }
  const Vec a = w.value * xv + flat(b.value);
  const Vec c = u.value * hv;
  const Vec z = logistic(a.segment(0, H) + c.segment(0, H));
  const Vec r = logistic(a.segment(H, H) + c.segment(H, H));
  const Vec n = (a.segment(2 * H, H).array() + r.array() * c.segment(2 * H, H).array()).tanh().matrix();
  Vec out = ((1.0 - z.array()) * n.array() + z.array() * hv.array()).matrix();
  Param* wp = &w;
  Param* up = &u;
  Param* bp = &b;
  return push(std::move(out), [wp, up, bp, x, h, c, z, r, n, H](Tape& t, const Vec& g) {
    const Vec& xv = t.value(x);
    const Vec& hv = t.value(h);
    const Vec dz = (g.array() * (hv - n).array()).matrix();
    const Vec dn_pre = (g.array() * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
    const Vec dr = (dn_pre.array() * c.segment(2 * H, H).array()).matrix();
    Vec da(3 * H), dc(3 * H);
    da.segment(0, H) = (dz.array() * z.array() * (1.0 - z.array())).matrix();
    da.segment(H, H) = (dr.array() * r.array() * (1.0 - r.array())).matrix();
    da.segment(2 * H, H) = dn_pre;
    dc.segment(0, 2 * H) = da.segment(0, 2 * H);
    dc.segment(2 * H, H) = (dn_pre.array() * r.array()).matrix();
    if (wp->trainable) wp->grad.noalias() += da * xv.transpose();
    if (bp->trainable) Eigen::Map<Vec>(bp->grad.data(), bp->grad.size()) += da;
    if (up->trainable) up->grad.noalias() += dc * hv.transpose();
    t.accumulate(x, wp->value.transpose() * da);
    t.accumulate(h, up->value.transpose() * dc + (g.array() * z.array()).matrix());
  });
}

Var Tape::add(Var a, Var b) {
  check_same(value(a), value(b), "add");
  return push(value(a) + value(b), [a, b](Tape& t, const Vec& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same(value(a), value(b), "sub");
  return push(value(a) - value(b), [a, b](Tape& t, const Vec& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var Tape::mul(Var a, Var b) {
  check_same(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, const Vec& g) {
    t.accumulate(a, g.cwiseProduct(t.value(b)));
    t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double c) {
  return push(value(a) * c, [a, c](Tape& t, const Vec& g) { t.accumulate(a, g * c); });
}

Var Tape::shift(Var a, double c) {
  return push((value(a).array() + c).matrix(), [a](Tape& t, const Vec& g) { t.accumulate(a, g); });
}

Var Tape::scalar_mul(Var s, Var v) {
  const double sv = scalar(s);
  return push(value(v) * sv, [s, v](Tape& t, const Vec& g) {
    t.accumulate(s, Vec::Constant(1, g.dot(t.value(v))));
    t.accumulate(v, g * t.scalar(s));
  });
}

Var Tape::tanh(Var a) {
  Vec y = value(a).array().tanh().matrix();
  return push(y, [a, y](Tape& t, const Vec& g) {
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var Tape::sigmoid(Var a) {
  Vec y = logistic(value(a));
  return push(y, [a, y](Tape& t, const Vec& g) {
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var Tape::relu(Var a) {
  return push(value(a).cwiseMax(0.0), [a](Tape& t, const Vec& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0).matrix());
  });
}

Var Tape::exp(Var a) {
  Vec y = value(a).array().exp().matrix();
  return push(y, [a, y](Tape& t, const Vec& g) { t.accumulate(a, g.cwiseProduct(y)); });
}

Var Tape::log(Var a, double floor) {
  const Vec& x = value(a);
  return push(x.cwiseMax(floor).array().log().matrix(), [a, floor](Tape& t, const Vec& g) {
    const Vec& x = t.value(a);
    t.accumulate(a, (x.array() > floor).select(g.array() / x.array(), 0.0).matrix());
  });
}

Var Tape::square(Var a) {
  return push(value(a).array().square().matrix(), [a](Tape& t, const Vec& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var Tape::concat(const std::vector<Var>& parts) {
  Eigen::Index total = 0;
  for (auto p : parts) total += value(p).size();
  Vec out(total);
  Eigen::Index off = 0;
  for (auto p : parts) {
    const Vec& v = value(p);
    out.segment(off, v.size()) = v;
    off += v.size();
  }
  return push(std::move(out), [parts](Tape& t, const Vec& g) {
    Eigen::Index off = 0;
    for (auto p : parts) {
      const auto n = t.value(p).size();
      t.accumulate(p, g.segment(off, n));
      off += n;
    }
  });
}

Var Tape::slice(Var a, Eigen::Index start, Eigen::Index len) {
  const Vec& x = value(a);
  if (start < 0 || len < 0 || start + len > x.size()) throw ShapeError("slice out of range");
  return push(x.segment(start, len), [a, start, len](Tape& t, const Vec& g) {
    Vec full = Vec::Zero(t.value(a).size());
    full.segment(start, len) = g;
    t.accumulate(a, full);
  });
}

Var Tape::gather(Var a, const std::vector<int>& index) {
  const Vec& x = value(a);
  Vec out(static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.size()) throw ShapeError("gather index out of range");
    out(static_cast<Eigen::Index>(i)) = x(index[i]);
  }
  return push(std::move(out), [a, index](Tape& t, const Vec& g) {
    Vec full = Vec::Zero(t.value(a).size());
    for (std::size_t i = 0; i < index.size(); ++i) full(index[i]) += g(static_cast<Eigen::Index>(i));
    t.accumulate(a, full);
  });
}

Var Tape::sum(Var a) {
  return push(Vec::Constant(1, value(a).sum()), [a](Tape& t, const Vec& g) {
    t.accumulate(a, Vec::Constant(t.value(a).size(), g(0)));
  });
}

Var Tape::pick(Var a, Eigen::Index i) { return slice(a, i, 1); }

Var Tape::softmax(Var a) {
  Vec y = neural::softmax(value(a));
  return push(y, [a, y](Tape& t, const Vec& g) { t.accumulate(a, y.cwiseProduct((g.array() - g.dot(y)).matrix())); });
}

void Tape::backward(Var loss) {
  if (!record_) throw StateError("backward() on a tape built without recording");
  if (scalar(loss) != scalar(loss)) throw NumericError("backward() from a NaN loss");
  for (auto& n : nodes_) n.grad.resize(0);
  nodes_[static_cast<std::size_t>(loss.id)].grad = Vec::Ones(1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.back) continue;
    const Vec g = n.grad;
    n.back(*this, g);
  }
}

Vec softmax(const Vec& x) {
  const Vec e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace gmop::neural
