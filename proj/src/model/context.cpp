#include "gmop/model/context.hpp"

#include "gmop/model/frame.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmop::model {

using neural::Activation;
using neural::Mat;

namespace {

constexpr int kGeometryDim = 6;

}  // namespace

ContextEncoder::ContextEncoder(const ContextConfig& config, ParamStore& store, const std::string& prefix,
                               std::mt19937_64& rng)
    : config_(config) {
  if (config.depth < 1) throw std::invalid_argument("context depth must be at least 1");
  if (config.message_dim != config.context_dim) {
    throw std::invalid_argument("context message_dim must equal context_dim");
  }
  past_ = neural::GruCell::create(store, prefix + ".past", 2, config.past_hidden, rng);
  int in = config.past_hidden + scene::kNumAgentKinds;
  for (int k = 0; k < config.depth; ++k) {
    const std::string name = prefix + ".round" + std::to_string(k);
    Round r;
    r.self = neural::Dense::create(store, name + ".self", in, config.context_dim, Activation::Identity, rng);
    r.message =
        neural::Dense::create(store, name + ".msg", in + kGeometryDim, config.message_dim, Activation::Tanh, rng);
    rounds_.push_back(r);
    in = config.context_dim;
  }
  past_scale_ = store.add(prefix + ".past_scale", Mat::Ones(1, 1), false);
}

double ContextEncoder::past_scale(const ParamStore& store) const { return store[past_scale_].value(0, 0); }

void ContextEncoder::set_past_scale(ParamStore& store, double scale) const {
  if (!(scale > 0.0)) throw std::invalid_argument("past scale must be positive");
  store[past_scale_].value(0, 0) = scale;
}

std::vector<Var> ContextEncoder::encode(Tape& tape, ParamStore& store, const scene::ObservedScene& scene,
                                        const graphs::InteractionGraph& graph,
                                        const std::vector<Var>& edge_weights) const {
  const std::size_t n = scene.agents.size();
  if (graph.nodes().size() != n) throw std::invalid_argument("context graph does not match the scene agents");
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.nodes()[i] != scene.agents[i].id) {
      throw std::invalid_argument("context graph node order does not match the scene agents");
    }
  }
  if (!edge_weights.empty() && edge_weights.size() != graph.edges().size()) {
    throw std::invalid_argument("edge weight count does not match the graph");
  }

  const double inv_scale = 1.0 / past_scale(store);
  std::vector<AgentFrame> frames;
  std::vector<Point> last_step;
  std::vector<Var> state;
  for (const auto& a : scene.agents) {
    const auto frame = AgentFrame::of(a.past);
    frames.push_back(frame);
    std::vector<Var> seq;
    if (a.past.size() < 2) {
      seq.push_back(tape.constant(Vec::Zero(2)));
      last_step.push_back(Point::Zero());
    } else {
      for (std::size_t t = 1; t < a.past.size(); ++t) {
        seq.push_back(tape.constant(frame.to_local(a.past[t] - a.past[t - 1]) * inv_scale));
      }
      last_step.push_back(a.past.back() - a.past[a.past.size() - 2]);
    }
    Vec kind = Vec::Zero(scene::kNumAgentKinds);
    kind(static_cast<int>(a.kind)) = 1.0;
    state.push_back(tape.concat({neural::gru_encode(tape, store, past_, seq), tape.constant(kind)}));
  }

  // Edge geometry is fixed across rounds.
  std::vector<Vec> geometry;
  for (const auto& e : graph.edges()) {
    const std::size_t src = graph.index_of(e.src);
    const std::size_t dst = graph.index_of(e.dst);
    const auto& f = frames[dst];
    const Point offset = scene.agents[src].past.back() - scene.agents[dst].past.back();
    const Point rel = f.to_local(offset) / config_.distance_scale;
    const Point vel = f.to_local(last_step[src]) * inv_scale;
    const double cos_rel = frames[src].cos_g * f.cos_g + frames[src].sin_g * f.sin_g;
    const double sin_rel = frames[src].sin_g * f.cos_g - frames[src].cos_g * f.sin_g;
    Vec g(kGeometryDim);
    g << rel.x(), rel.y(), vel.x(), vel.y(), cos_rel, sin_rel;
    geometry.push_back(g);
  }

  for (const auto& round : rounds_) {
    std::vector<Var> incoming(n, Var{});
    for (std::size_t k = 0; k < graph.edges().size(); ++k) {
      const auto& e = graph.edges()[k];
      const std::size_t src = graph.index_of(e.src);
      const std::size_t dst = graph.index_of(e.dst);
      const Var msg = round.message.forward(tape, store, tape.concat({state[src], tape.constant(geometry[k])}));
      const Var weighted =
          edge_weights.empty() ? tape.scale(msg, e.weight) : tape.scalar_mul(edge_weights[k], msg);
      incoming[dst] = incoming[dst].valid() ? tape.add(incoming[dst], weighted) : weighted;
    }
    std::vector<Var> next;
    next.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
      Var pre = round.self.forward(tape, store, state[a]);
      if (incoming[a].valid()) pre = tape.add(pre, incoming[a]);
      next.push_back(tape.tanh(pre));
    }
    state = std::move(next);
  }
  return state;
}

double past_displacement_rms(const std::vector<scene::Scene>& scenes) {
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& s : scenes) {
    for (const auto& a : s.agents) {
      for (std::size_t t = 1; t < a.past.size(); ++t) {
        sq += (a.past[t] - a.past[t - 1]).squaredNorm();
        count += 2;
      }
    }
  }
  return count ? std::max(std::sqrt(sq / static_cast<double>(count)), 1e-3) : 1.0;
}

}  // namespace gmop::model
