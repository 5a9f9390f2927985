#include "gmop/model/classifier.hpp"

#include "gmop/error.hpp"
#include "gmop/geom.hpp"
#include "gmop/model/context.hpp"
#include "gmop/model/frame.hpp"
#include "gmop/neural/optim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gmop::model {

using graphs::InteractionClass;
using neural::Activation;
using neural::Mat;

PairClassifier::PairClassifier(const ClassifierConfig& config)
    : config_(config), enc_dim_(config.enc_dim), distance_scale_(config.distance_scale) {
  std::mt19937_64 rng(config.seed);
  past_ = neural::GruCell::create(store, "cls.past", 2, config.enc_dim, rng);
  embed_ = neural::Dense::create(store, "cls.embed", feature_dim(), config.embed_dim, Activation::Tanh, rng);
  head_ = neural::Dense::create(store, "cls.head", config.embed_dim, graphs::kNumClasses, Activation::Identity, rng);
  past_scale_ = store.add("cls.past_scale", Mat::Ones(1, 1), false);
}

int PairClassifier::feature_dim() const { return 2 * enc_dim_ + 2 * scene::kNumAgentKinds + 2 + 1; }

void PairClassifier::set_past_scale(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("past scale must be positive");
  store[past_scale_].value(0, 0) = scale;
}

double PairClassifier::past_scale() const { return store[past_scale_].value(0, 0); }

namespace {

std::vector<Point> past_deltas(const AgentFrame& frame, const scene::Trajectory& past) {
  if (past.size() < 2) return {Point::Zero()};
  std::vector<Point> out;
  for (std::size_t t = 1; t < past.size(); ++t) out.push_back(frame.to_local(past[t] - past[t - 1]));
  return out;
}

Vec one_hot(scene::AgentKind kind) {
  Vec v = Vec::Zero(scene::kNumAgentKinds);
  v(static_cast<int>(kind)) = 1.0;
  return v;
}

}  // namespace

Var PairClassifier::features(Tape& tape, const scene::ObservedScene& scene, std::size_t m, std::size_t n) {
  if (m == n) throw std::invalid_argument("pair features need two distinct agents");
  const auto& am = scene.agents.at(m);
  const auto& an = scene.agents.at(n);
  const auto frame = AgentFrame::of(am.past);
  const double inv = 1.0 / past_scale();
  auto encode = [&](const scene::Trajectory& past) {
    std::vector<Var> seq;
    for (const auto& d : past_deltas(frame, past)) seq.push_back(tape.constant(d * inv));
    return neural::gru_encode(tape, store, past_, seq);
  };
  const Point d = am.past.back() - an.past.back();
  const Point last_step = am.past.size() >= 2 ? Point(am.past.back() - am.past[am.past.size() - 2]) : Point::Zero();
  const double alpha = geom::approach_angle(d, last_step).alpha;
  const Point d_local = frame.to_local(d) / distance_scale_;
  Vec tail(2 * scene::kNumAgentKinds + 3);
  tail << one_hot(am.kind), one_hot(an.kind), d_local.x(), d_local.y(), alpha;
  return tape.concat({encode(am.past), encode(an.past), tape.constant(tail)});
}

Var PairClassifier::probs_from_features(Tape& tape, Var features) {
  return tape.softmax(head_.forward(tape, store, embed_.forward(tape, store, features)));
}

Var PairClassifier::probs(Tape& tape, const scene::ObservedScene& scene, std::size_t m, std::size_t n) {
  return probs_from_features(tape, features(tape, scene, m, n));
}

Vec PairClassifier::features(const scene::ObservedScene& scene, std::size_t m, std::size_t n) {
  Tape tape(false);
  return tape.value(features(tape, scene, m, n));
}

namespace {

graphs::InteractionLabel label_from_probs(const Vec& p) {
  graphs::InteractionLabel label;
  int best = 0;
  for (int c = 1; c < graphs::kNumClasses; ++c) {
    if (p(c) > p(best)) best = c;
  }
  label.cls = static_cast<InteractionClass>(best);
  for (int c = 0; c < graphs::kNumClasses; ++c) label.probs[static_cast<std::size_t>(c)] = p(c);
  return label;
}

}  // namespace

graphs::InteractionLabel PairClassifier::classify(const Vec& features) {
  if (features.size() != feature_dim()) {
    throw ShapeError(fmt::format("classifier expects {} features, got {}", feature_dim(), features.size()));
  }
  Tape tape(false);
  return label_from_probs(tape.value(probs_from_features(tape, tape.constant(features))));
}

std::vector<graphs::PairLabel> PairClassifier::predict_labels(const scene::ObservedScene& scene) {
  std::vector<graphs::PairLabel> out;
  for (std::size_t m = 0; m < scene.agents.size(); ++m) {
    for (std::size_t n = m + 1; n < scene.agents.size(); ++n) {
      Tape tape(false);
      out.push_back({m, n, label_from_probs(tape.value(probs(tape, scene, m, n)))});
    }
  }
  return out;
}

graphs::InteractionGraph predicted_graph(PairClassifier& classifier, const scene::ObservedScene& scene) {
  std::vector<scene::AgentId> nodes;
  for (const auto& a : scene.agents) nodes.push_back(a.id);
  return graphs::graph_from_labels(nodes, classifier.predict_labels(scene));
}

std::vector<std::vector<graphs::PairLabel>> heuristic_labels(const std::vector<scene::Scene>& scenes,
                                                             graphs::Strategy strategy,
                                                             const scene::AgentTypeTable& types, bool symmetric_eps) {
  if (!graphs::is_crossing_family(strategy)) {
    throw ConfigError("strategy '" + std::string(graphs::strategy_name(strategy)) + "' has no heuristic labels");
  }
  auto options = graphs::crossing_options(strategy);
  options.symmetric_eps = symmetric_eps;
  std::vector<std::vector<graphs::PairLabel>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(graphs::crossing_labels(s, types, options));
  return out;
}

ClassifierReport evaluate_classifier(PairClassifier& classifier, const std::vector<scene::Scene>& scenes,
                                     graphs::Strategy strategy, const scene::AgentTypeTable& types,
                                     bool symmetric_eps) {
  const auto labels = heuristic_labels(scenes, strategy, types, symmetric_eps);
  ClassifierReport report;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto predicted = classifier.predict_labels(scene::observe(scenes[i]));
    for (std::size_t k = 0; k < predicted.size(); ++k) {
      const int truth = static_cast<int>(labels[i][k].label.cls);
      const int guess = static_cast<int>(predicted[k].label.cls);
      ++report.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(guess)];
      correct += truth == guess;
      ++report.eval_pairs;
    }
  }
  if (report.eval_pairs) report.accuracy = static_cast<double>(correct) / static_cast<double>(report.eval_pairs);
  for (std::size_t c = 0; c < graphs::kNumClasses; ++c) {
    const int total = std::accumulate(report.confusion[c].begin(), report.confusion[c].end(), 0);
    report.recall[c] = total ? static_cast<double>(report.confusion[c][c]) / total : 0.0;
  }
  return report;
}

namespace {

struct Example {
  std::size_t scene = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  int cls = 0;
};

}  // namespace

ClassifierReport pretrain_classifier(PairClassifier& classifier, const std::vector<scene::Scene>& train,
                                     const std::vector<scene::Scene>& val, graphs::Strategy strategy,
                                     const ClassifierConfig& config, const scene::AgentTypeTable& types,
                                     const Logger& log) {
  const auto labels = heuristic_labels(train, strategy, types, config.symmetric_eps);
  std::vector<scene::ObservedScene> observed;
  observed.reserve(train.size());
  for (const auto& s : train) observed.push_back(scene::observe(s));

  std::vector<Example> examples;
  std::array<double, graphs::kNumClasses> counts{};
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (const auto& pl : labels[i]) {
      const int c = static_cast<int>(pl.label.cls);
      const int flipped = static_cast<int>(graphs::flip(pl.label.cls));
      examples.push_back({i, pl.m, pl.n, c});
      examples.push_back({i, pl.n, pl.m, flipped});
      counts[static_cast<std::size_t>(c)] += 1;
      counts[static_cast<std::size_t>(flipped)] += 1;
    }
  }
  if (examples.empty()) throw std::invalid_argument("pretrain_classifier: no agent pairs in the training scenes");

  classifier.set_past_scale(past_displacement_rms(train));

  ClassifierReport report;
  int present = 0;
  double inv_sum = 0.0;
  for (double c : counts) {
    if (c > 0) {
      ++present;
      inv_sum += 1.0 / c;
    }
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    report.class_weights[c] = counts[c] > 0 ? (1.0 / counts[c]) / (inv_sum / present) : 1.0;
  }
  report.degenerate = present == 1;
  if (report.degenerate) log_line(log, "warning: training labels contain a single class");
  report.train_pairs = examples.size();
  const std::vector<double> weights(report.class_weights.begin(), report.class_weights.end());

  std::mt19937_64 rng(config.seed ^ 0xc1a55);
  const neural::AdamConfig adam{config.lr};
  ParamStore best = classifier.store;
  double best_acc = -1.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(examples.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = examples[k];
        Tape tape;
        const Var p = classifier.probs(tape, observed[ex.scene], ex.m, ex.n);
        const Var loss = tape.scale(neural::weighted_cross_entropy(tape, p, ex.cls, weights), inv);
        total += tape.scalar(loss) / inv;
        tape.backward(loss);
      }
      if (!std::isfinite(total)) {
        classifier.store.assign_from(best);
        throw NumericError(fmt::format("classifier loss diverged in epoch {}", epoch));
      }
      neural::clip_grad_norm(classifier.store, config.clip);
      neural::adam_step(classifier.store, adam);
    }
    const double mean_loss = total / static_cast<double>(examples.size());
    report.epoch_loss.push_back(mean_loss);
    const double acc = val.empty() ? -mean_loss : evaluate_classifier(classifier, val, strategy, types,
                                                                      config.symmetric_eps).accuracy;
    report.epoch_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best = classifier.store;
    }
    log_line(log, fmt::format("classifier epoch {} loss {:.4f} held-out accuracy {:.4f}", epoch, mean_loss, acc));
  }
  classifier.store.assign_from(best);

  const auto eval = evaluate_classifier(classifier, val.empty() ? train : val, strategy, types, config.symmetric_eps);
  report.accuracy = eval.accuracy;
  report.recall = eval.recall;
  report.confusion = eval.confusion;
  report.eval_pairs = eval.eval_pairs;
  return report;
}

}  // namespace gmop::model
