#include "gmop/flow.hpp"

#include "gmop/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace gmop::flow {

namespace {

std::vector<int> make_permutation(int dim, int layer, std::mt19937_64& rng) {
  std::vector<int> perm(static_cast<std::size_t>(dim));
  std::iota(perm.begin(), perm.end(), 0);
  if (dim <= 3 || layer % 2 == 0) {
    std::reverse(perm.begin(), perm.end());
  } else {
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  return perm;
}

void check_finite(const Tape& tape, Var v, std::size_t layer) {
  if (!tape.value(v).allFinite()) throw NumericError("flow layer " + std::to_string(layer) + ": non-finite value");
}

}  // namespace

FlowStack::FlowStack(const FlowConfig& config, ParamStore& store, const std::string& prefix, std::mt19937_64& rng)
    : config_(config) {
  if (config.dim < 1 || config.cond_dim < 0 || config.layers < 1 || config.hidden < 1) {
    throw std::invalid_argument("invalid flow configuration");
  }
  if (!(config.scale_clamp > 0.0)) throw std::invalid_argument("scale_clamp must be positive");
  using neural::Activation;
  for (int k = 0; k < config.layers; ++k) {
    CouplingLayer layer;
    layer.perm = make_permutation(config.dim, k, rng);
    layer.inv_perm.resize(layer.perm.size());
    for (std::size_t i = 0; i < layer.perm.size(); ++i) {
      layer.inv_perm[static_cast<std::size_t>(layer.perm[i])] = static_cast<int>(i);
    }
    layer.split = config.dim / 2;
    const std::string name = prefix + ".layer" + std::to_string(k);
    const int transformed = config.dim - layer.split;
    layer.h1 = neural::Dense::create(store, name + ".h1", layer.split + config.cond_dim, config.hidden,
                                     Activation::Tanh, rng);
    layer.h2 = neural::Dense::create(store, name + ".h2", config.hidden, config.hidden, Activation::Tanh, rng);
    layer.out = neural::Dense::create(store, name + ".out", config.hidden, 2 * transformed, Activation::Identity, rng);
    if (config.identity_init) store[layer.out.w].value.setZero();
    layers_.push_back(std::move(layer));
  }
}

void FlowStack::check_dims(const Tape& tape, Var v, Var cond) const {
  if (tape.value(v).size() != config_.dim) {
    throw ShapeError("flow expects dimension " + std::to_string(config_.dim) + ", got " +
                     std::to_string(tape.value(v).size()));
  }
  if (tape.value(cond).size() != config_.cond_dim) {
    throw ShapeError("flow expects conditioning of size " + std::to_string(config_.cond_dim) + ", got " +
                     std::to_string(tape.value(cond).size()));
  }
}

std::pair<Var, Var> FlowStack::conditioner(Tape& tape, ParamStore& store, const CouplingLayer& layer, Var kept,
                                           Var cond) const {
  const Var in = tape.concat({kept, cond});
  const Var raw = layer.out.forward(tape, store, layer.h2.forward(tape, store, layer.h1.forward(tape, store, in)));
  const Eigen::Index transformed = config_.dim - layer.split;
  const double c = config_.scale_clamp;
  const Var log_scale = tape.scale(tape.tanh(tape.scale(tape.slice(raw, 0, transformed), 1.0 / c)), c);
  const Var shift = tape.slice(raw, transformed, transformed);
  return {log_scale, shift};
}

FlowOutput FlowStack::forward(Tape& tape, ParamStore& store, Var y, Var cond) const {
  check_dims(tape, y, cond);
  Var x = y;
  std::vector<Var> logdets;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    const Var p = tape.gather(x, layer.perm);
    const Var kept = tape.slice(p, 0, layer.split);
    const Var moved = tape.slice(p, layer.split, config_.dim - layer.split);
    const auto [s, t] = conditioner(tape, store, layer, kept, cond);
    const Var out = tape.add(tape.mul(moved, tape.exp(s)), t);
    x = tape.concat({kept, out});
    check_finite(tape, x, k);
    logdets.push_back(tape.sum(s));
  }
  Var logdet = logdets.front();
  for (std::size_t k = 1; k < logdets.size(); ++k) logdet = tape.add(logdet, logdets[k]);
  return {x, logdet};
}

Var FlowStack::inverse(Tape& tape, ParamStore& store, Var z, Var cond, Var* logdet) const {
  check_dims(tape, z, cond);
  Var x = z;
  Var total = tape.constant(Vec::Zero(1));
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const Var kept = tape.slice(x, 0, layer.split);
    const Var out = tape.slice(x, layer.split, config_.dim - layer.split);
    const auto [s, t] = conditioner(tape, store, layer, kept, cond);
    const Var moved = tape.mul(tape.sub(out, t), tape.exp(tape.scale(s, -1.0)));
    x = tape.gather(tape.concat({kept, moved}), layer.inv_perm);
    check_finite(tape, x, k);
    if (logdet) total = tape.sub(total, tape.sum(s));
  }
  if (logdet) *logdet = total;
  return x;
}

double base_log_density(const Vec& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

Var base_log_density(Tape& tape, Var z) {
  const double c = -0.5 * static_cast<double>(tape.value(z).size()) * std::log(2.0 * std::numbers::pi);
  return tape.shift(tape.scale(tape.sum(tape.square(z)), -0.5), c);
}

Var FlowStack::log_prob(Tape& tape, ParamStore& store, Var y, Var cond) const {
  const auto out = forward(tape, store, y, cond);
  return tape.add(base_log_density(tape, out.z), out.logdet);
}

std::pair<Vec, double> FlowStack::forward_normalize(ParamStore& store, const Vec& y, const Vec& cond) const {
  Tape tape(false);
  const auto out = forward(tape, store, tape.constant(y), tape.constant(cond));
  return {tape.value(out.z), tape.scalar(out.logdet)};
}

std::pair<Vec, double> FlowStack::inverse_generate(ParamStore& store, const Vec& z, const Vec& cond) const {
  Tape tape(false);
  Var logdet;
  const Var y = inverse(tape, store, tape.constant(z), tape.constant(cond), &logdet);
  return {tape.value(y), tape.scalar(logdet)};
}

double FlowStack::log_prob(ParamStore& store, const Vec& y, const Vec& cond) const {
  Tape tape(false);
  return tape.scalar(log_prob(tape, store, tape.constant(y), tape.constant(cond)));
}

Vec FlowStack::sample_one(ParamStore& store, const Vec& cond, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(config_.dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return inverse_generate(store, z, cond).first;
}

std::vector<Vec> FlowStack::sample(ParamStore& store, const Vec& cond, int count, std::uint64_t seed) const {
  if (count < 1) throw std::invalid_argument("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out.push_back(sample_one(store, cond, rng));
  return out;
}

Var nll_loss(Tape& tape, ParamStore& store, const FlowStack& flow, const std::vector<std::pair<Var, Var>>& batch) {
  if (batch.empty()) throw std::invalid_argument("nll_loss: empty batch");
  Var total = flow.log_prob(tape, store, batch.front().first, batch.front().second);
  for (std::size_t i = 1; i < batch.size(); ++i) {
    total = tape.add(total, flow.log_prob(tape, store, batch[i].first, batch[i].second));
  }
  return tape.scale(total, -1.0 / static_cast<double>(batch.size()));
}

}  // namespace gmop::flow
