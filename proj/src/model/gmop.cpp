#include "gmop/model/gmop.hpp"

#include "gmop/error.hpp"
#include "gmop/model/frame.hpp"
#include "gmop/neural/optim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace gmop::model {

using graphs::InteractionGraph;
using graphs::Strategy;

namespace {

flow::FlowConfig flow_config(const GmopConfig& config, int latent_dim) {
  flow::FlowConfig fc;
  fc.dim = latent_dim;
  fc.cond_dim = config.context.context_dim + latent_dim;
  fc.layers = config.flow_layers;
  fc.hidden = config.flow_hidden;
  fc.scale_clamp = config.scale_clamp;
  fc.identity_init = true;
  return fc;
}

std::optional<PairClassifier> own_classifier(const GmopConfig& config, std::optional<PairClassifier> given) {
  if (config.strategy == Strategy::NoHeuristic) {
    if (given) return given;
    ClassifierConfig cc = config.classifier;
    cc.seed = config.seed ^ 0x5eedc1a55ULL;
    return PairClassifier(cc);
  }
  if (graphs::uses_classifier(config.strategy)) {
    if (!given) {
      throw DependencyError(fmt::format("variant '{}' needs a pretrained interaction classifier",
                                        graphs::strategy_name(config.strategy)));
    }
    given->store.set_trainable(false);
    return given;
  }
  return std::nullopt;
}

}  // namespace

GmopModel::GmopModel(const GmopConfig& config, TrajectoryAutoencoder autoencoder,
                     std::optional<PairClassifier> classifier)
    : config_(config),
      autoencoder_(std::move(autoencoder)),
      classifier_(own_classifier(config, std::move(classifier))) {
  if (autoencoder_.n_future() < 1) throw std::invalid_argument("model needs a constructed autoencoder");
  autoencoder_.store.set_trainable(false);
  std::mt19937_64 rng(config.seed);
  context_ = ContextEncoder(config.context, store, "ctx", rng);
  flow_ = flow::FlowStack(flow_config(config, autoencoder_.latent_dim()), store, "flow", rng);
}

std::vector<ParamStore*> GmopModel::trainable_stores() {
  std::vector<ParamStore*> out{&store};
  if (config_.strategy == Strategy::NoHeuristic) out.push_back(&classifier_->store);
  return out;
}

InteractionGraph GmopModel::build_graph(const scene::ObservedScene& scene) {
  switch (config_.strategy) {
    case Strategy::Independence:
      return graphs::independence_graph(scene);
    case Strategy::Euclidean:
      return graphs::euclidean_graph(scene, config_.euclidean_eps);
    default:
      return predicted_graph(*classifier_, scene);
  }
}

std::vector<Vec> GmopModel::target_latents(const scene::Scene& scene) {
  std::vector<Vec> out;
  out.reserve(scene.agents.size());
  for (const auto& a : scene.agents) {
    if (static_cast<int>(a.future.size()) != autoencoder_.n_future()) {
      throw ShapeError(fmt::format("scene {} has {} future steps, the model expects {}", scene.scene_id,
                                   a.future.size(), autoencoder_.n_future()));
    }
    out.push_back(autoencoder_.encode_future(a));
  }
  return out;
}

void GmopModel::check_graph(const scene::ObservedScene& scene, const InteractionGraph& graph) const {
  if (graph.nodes().size() != scene.agents.size()) {
    throw std::invalid_argument("graph nodes do not match the scene agents");
  }
  if (graphs::has_cycle(graph)) throw ContractError("joint NLL needs an acyclic interaction graph");
}

Var GmopModel::joint_scene_nll(Tape& tape, const scene::ObservedScene& scene, const std::vector<Vec>& latents,
                               const InteractionGraph& graph, const std::vector<Var>& edge_weights) {
  check_graph(scene, graph);
  if (latents.size() != scene.agents.size()) throw ShapeError("one latent per agent is required");
  const auto context = context_.encode(tape, store, scene, graph, edge_weights);
  const bool weighted_pool = config_.strategy == Strategy::NoHeuristic;
  std::vector<Var> pool(scene.agents.size(), Var{});
  for (std::size_t k = 0; k < graph.edges().size(); ++k) {
    const auto& e = graph.edges()[k];
    const std::size_t src = graph.index_of(e.src);
    const std::size_t dst = graph.index_of(e.dst);
    Var term = tape.constant(latents[src]);
    if (weighted_pool) {
      term = edge_weights.empty() ? tape.scale(term, e.weight) : tape.scalar_mul(edge_weights[k], term);
    }
    pool[dst] = pool[dst].valid() ? tape.add(pool[dst], term) : term;
  }
  Var total;
  for (std::size_t a = 0; a < scene.agents.size(); ++a) {
    const Var parents = pool[a].valid() ? pool[a] : tape.constant(Vec::Zero(latent_dim()));
    const Var cond = tape.concat({context[a], parents});
    const Var nll = tape.scale(flow_.log_prob(tape, store, tape.constant(latents[a]), cond), -1.0);
    total = total.valid() ? tape.add(total, nll) : nll;
  }
  return total.valid() ? total : tape.constant(Vec::Zero(1));
}

double GmopModel::joint_scene_nll(const scene::Scene& scene, const InteractionGraph& graph) {
  Tape tape(false);
  return tape.scalar(joint_scene_nll(tape, scene::observe(scene), target_latents(scene), graph));
}

double GmopModel::joint_scene_nll(const scene::Scene& scene) {
  const auto observed = scene::observe(scene);
  Tape tape(false);
  return tape.scalar(joint_scene_nll(tape, observed, target_latents(scene), build_graph(observed)));
}

Vec GmopModel::conditioning_pool(const std::vector<Vec>& latents, const InteractionGraph& graph, std::size_t index,
                                 const std::vector<bool>* ready) const {
  Vec pool = Vec::Zero(latent_dim());
  const bool weighted_pool = config_.strategy == Strategy::NoHeuristic;
  for (const auto& e : graph.edges()) {
    if (graph.index_of(e.dst) != index) continue;
    const std::size_t src = graph.index_of(e.src);
    if (ready && !(*ready)[src]) {
      throw ContractError(fmt::format("agent {} sampled before its parent {}", e.dst, e.src));
    }
    pool += weighted_pool ? Vec(latents[src] * e.weight) : latents[src];
  }
  return pool;
}

std::vector<Vec> GmopModel::context_values(const scene::ObservedScene& scene, const InteractionGraph& graph) {
  Tape tape(false);
  std::vector<Vec> out;
  for (const Var v : context_.encode(tape, store, scene, graph)) out.push_back(tape.value(v));
  return out;
}

double GmopModel::agent_conditional_nll(const scene::Scene& scene, const InteractionGraph& graph,
                                        std::size_t index) {
  const auto observed = scene::observe(scene);
  check_graph(observed, graph);
  const auto latents = target_latents(scene);
  const auto context = context_values(observed, graph);
  Vec cond(context[index].size() + latent_dim());
  cond << context[index], conditioning_pool(latents, graph, index, nullptr);
  return -flow_.log_prob(store, latents.at(index), cond);
}

Var GmopModel::training_nll(Tape& tape, const scene::ObservedScene& scene, const std::vector<Vec>& latents,
                            const InteractionGraph* fixed_graph) {
  if (config_.strategy != Strategy::NoHeuristic) {
    if (fixed_graph) return joint_scene_nll(tape, scene, latents, *fixed_graph);
    return joint_scene_nll(tape, scene, latents, build_graph(scene));
  }
  // Graph structure follows the current argmax labels; the winning probabilities stay on the tape.
  std::vector<scene::AgentId> nodes;
  for (const auto& a : scene.agents) nodes.push_back(a.id);
  std::vector<graphs::PairLabel> labels;
  std::map<std::pair<scene::AgentId, scene::AgentId>, Var> weight_of;
  for (std::size_t m = 0; m < scene.agents.size(); ++m) {
    for (std::size_t n = m + 1; n < scene.agents.size(); ++n) {
      const Var p = classifier_->probs(tape, scene, m, n);
      const Vec pv = tape.value(p);
      graphs::InteractionLabel label;
      Eigen::Index best = 0;
      pv.maxCoeff(&best);
      label.cls = static_cast<graphs::InteractionClass>(best);
      for (int c = 0; c < graphs::kNumClasses; ++c) label.probs[static_cast<std::size_t>(c)] = pv(c);
      labels.push_back({m, n, label});
      const Var w = tape.pick(p, best);
      const auto idm = scene.agents[m].id;
      const auto idn = scene.agents[n].id;
      weight_of[{idm, idn}] = w;
      weight_of[{idn, idm}] = w;
    }
  }
  const auto graph = graphs::graph_from_labels(nodes, labels);
  std::vector<Var> weights;
  for (const auto& e : graph.edges()) weights.push_back(weight_of.at({e.src, e.dst}));
  return joint_scene_nll(tape, scene, latents, graph, weights);
}

std::vector<scene::SceneSample> GmopModel::predict_scene(const scene::ObservedScene& scene, int n_samples,
                                                         std::uint64_t seed) {
  if (!trained_) throw StateError("predict_scene needs a trained model");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be at least 1");
  const auto graph = build_graph(scene);
  const auto order = graphs::topological_order(graph);
  const auto context = context_values(scene, graph);
  std::vector<AgentFrame> frames;
  for (const auto& a : scene.agents) frames.push_back(AgentFrame::of(a.past));

  std::vector<scene::SceneSample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    std::vector<Vec> latents(scene.agents.size(), Vec::Zero(latent_dim()));
    std::vector<bool> ready(scene.agents.size(), false);
    scene::SceneSample sample(scene.agents.size());
    for (const auto id : order) {
      const std::size_t a = graph.index_of(id);
      Vec cond(context[a].size() + latent_dim());
      cond << context[a], conditioning_pool(latents, graph, a, &ready);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(id),
                        static_cast<std::uint32_t>(static_cast<std::uint64_t>(id) >> 32)};
      std::mt19937_64 rng(seq);
      latents[a] = flow_.sample_one(store, cond, rng);
      ready[a] = true;
      sample[a] = integrate_local(frames[a], autoencoder_.decode(latents[a]));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

double GmopModel::scene_log_likelihood(const scene::Scene& scene) {
  if (!trained_) throw StateError("scene_log_likelihood needs a trained model");
  return -joint_scene_nll(scene);
}

double mean_joint_nll(GmopModel& model, const std::vector<scene::Scene>& scenes) {
  if (scenes.empty()) throw std::invalid_argument("mean_joint_nll: no scenes");
  double total = 0.0;
  for (const auto& s : scenes) total += model.joint_scene_nll(s);
  return total / static_cast<double>(scenes.size());
}

namespace {

struct Prepared {
  scene::ObservedScene observed;
  std::vector<Vec> latents;
  std::optional<InteractionGraph> graph;
};

std::vector<Prepared> prepare(GmopModel& model, const std::vector<scene::Scene>& scenes) {
  std::vector<Prepared> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    Prepared p{scene::observe(s), model.target_latents(s), std::nullopt};
    if (model.strategy() != Strategy::NoHeuristic) p.graph = model.build_graph(p.observed);
    out.push_back(std::move(p));
  }
  return out;
}

double evaluate(GmopModel& model, const std::vector<Prepared>& scenes) {
  double total = 0.0;
  for (const auto& p : scenes) {
    Tape tape(false);
    const auto graph = p.graph ? *p.graph : model.build_graph(p.observed);
    total += tape.scalar(model.joint_scene_nll(tape, p.observed, p.latents, graph));
  }
  return total / static_cast<double>(scenes.size());
}

void clip_stores(const std::vector<ParamStore*>& stores, double max_norm) {
  double sq = 0.0;
  for (const auto* s : stores) sq += s->grad_norm() * s->grad_norm();
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm) || !std::isfinite(norm)) return;
  const double factor = max_norm / norm;
  for (auto* s : stores) {
    for (auto& p : s->params()) {
      if (p.trainable) p.grad *= factor;
    }
  }
}

std::vector<ParamStore> snapshot(const std::vector<ParamStore*>& stores) {
  std::vector<ParamStore> out;
  for (const auto* s : stores) out.push_back(*s);
  return out;
}

void restore(const std::vector<ParamStore*>& stores, const std::vector<ParamStore>& saved) {
  for (std::size_t i = 0; i < stores.size(); ++i) *stores[i] = saved[i];
}

}  // namespace

TrainReport train(GmopModel& model, const std::vector<scene::Scene>& train_scenes,
                  const std::vector<scene::Scene>& val_scenes, const Logger& log) {
  if (train_scenes.empty()) throw std::invalid_argument("train: no training scenes");
  if (val_scenes.empty()) throw std::invalid_argument("train: no validation scenes");
  const auto& config = model.config();
  if (config.epochs < 0 || config.batch_size < 1) throw ConfigError("train: epochs >= 0 and batch_size >= 1 required");

  const double past_scale = past_displacement_rms(train_scenes);
  model.context().set_past_scale(model.store, past_scale);
  if (model.strategy() == Strategy::NoHeuristic) model.classifier()->set_past_scale(past_scale);

  const auto train_set = prepare(model, train_scenes);
  const auto val_set = prepare(model, val_scenes);
  const auto stores = model.trainable_stores();

  TrainReport report;
  const double init_train = evaluate(model, train_set);
  report.initial_val_nll = evaluate(model, val_set);
  report.best_val_nll = report.initial_val_nll;
  report.epochs.push_back({0, init_train, report.initial_val_nll, report.best_val_nll});
  log_line(log, fmt::format("epoch 0 train_nll {:.4f} val_nll {:.4f}", init_train, report.initial_val_nll));
  auto best = snapshot(stores);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x7a1bULL);
  const auto diverged = [&](int epoch, const std::string& what) {
    restore(stores, best);
    for (auto* s : stores) s->zero_grad();
    model.set_trained(true);
    return TrainingDiverged(fmt::format("training diverged in epoch {}: {}; best checkpoint restored", epoch, what),
                            report);
  };
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double progress = static_cast<double>(epoch - 1) / std::max(1, config.epochs - 1);
    neural::AdamConfig adam;
    adam.lr = config.lr * (config.lr_final_fraction +
                           (1.0 - config.lr_final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    double total = 0.0;
    double val_nll = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        const double inv = 1.0 / static_cast<double>(end - start);
        double batch_total = 0.0;
        for (std::size_t k = start; k < end; ++k) {
          const auto& p = train_set[order[k]];
          Tape tape;
          const Var nll = model.training_nll(tape, p.observed, p.latents, p.graph ? &*p.graph : nullptr);
          batch_total += tape.scalar(nll);
          tape.backward(tape.scale(nll, inv));
        }
        total += batch_total;
        if (!std::isfinite(batch_total)) throw NumericError("joint NLL is not finite");
        clip_stores(stores, config.clip);
        for (auto* s : stores) neural::adam_step(*s, adam);
      }
      val_nll = evaluate(model, val_set);
      if (!std::isfinite(val_nll)) throw NumericError("validation NLL is not finite");
    } catch (const NumericError& e) {
      throw diverged(epoch, e.what());
    }
    const double train_nll = total / static_cast<double>(train_set.size());
    if (val_nll < report.best_val_nll) {
      report.best_val_nll = val_nll;
      report.best_epoch = epoch;
      best = snapshot(stores);
    }
    report.epochs.push_back({epoch, train_nll, val_nll, report.best_val_nll});
    log_line(log, fmt::format("epoch {} train_nll {:.4f} val_nll {:.4f} best {:.4f}", epoch, train_nll, val_nll,
                              report.best_val_nll));
  }
  restore(stores, best);
  model.set_trained(true);
  return report;
}

}  // namespace gmop::model
