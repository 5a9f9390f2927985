#pragma once

#include "gmop/graphs.hpp"
#include "gmop/model/common.hpp"
#include "gmop/neural/layers.hpp"
#include "gmop/scene.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace gmop::model {

using neural::ParamStore;
using neural::Tape;
using neural::Var;
using neural::Vec;

struct ClassifierConfig {
  int enc_dim = 32;
  int embed_dim = 64;
  double distance_scale = 10.0;
  int epochs = 20;
  int batch_size = 64;
  double lr = 2e-3;
  double clip = 5.0;
  std::uint64_t seed = 0;
  bool symmetric_eps = false;
};

// Interaction classifier over agent pairs: a GRU past encoder feeding an embedding layer and a
// softmax head over {no interaction, m influences n, n influences m}.
// Pair features are expressed in agent m's heading frame.
class PairClassifier {
 public:
  PairClassifier() = default;
  explicit PairClassifier(const ClassifierConfig& config);

  ParamStore store;

  const ClassifierConfig& config() const { return config_; }

  // 2 * enc_dim + 2 * kinds + 2 + 1
  int feature_dim() const;

  Var features(Tape& tape, const scene::ObservedScene& scene, std::size_t m, std::size_t n);
  Var probs_from_features(Tape& tape, Var features);
  Var probs(Tape& tape, const scene::ObservedScene& scene, std::size_t m, std::size_t n);

  Vec features(const scene::ObservedScene& scene, std::size_t m, std::size_t n);
  // Argmax with ties going to the lowest class index. Throws ShapeError on a wrong feature size.
  graphs::InteractionLabel classify(const Vec& features);
  std::vector<graphs::PairLabel> predict_labels(const scene::ObservedScene& scene);

  void set_past_scale(double scale);
  double past_scale() const;

 private:
  ClassifierConfig config_;
  int enc_dim_ = 0;
  double distance_scale_ = 10.0;
  neural::GruCell past_;
  neural::Dense embed_;
  neural::Dense head_;
  neural::ParamId past_scale_ = 0;
};

// Argmax-directed edge per pair weighted by the winning probability, then dagified.
graphs::InteractionGraph predicted_graph(PairClassifier& classifier, const scene::ObservedScene& scene);

struct ClassifierReport {
  double accuracy = 0.0;
  std::array<double, graphs::kNumClasses> recall{};
  std::array<std::array<int, graphs::kNumClasses>, graphs::kNumClasses> confusion{};  // [true][predicted]
  std::array<double, graphs::kNumClasses> class_weights{1.0, 1.0, 1.0};
  std::size_t train_pairs = 0;
  std::size_t eval_pairs = 0;
  bool degenerate = false;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

// Heuristic labels for every unordered pair of each scene under a crossing-family strategy.
std::vector<std::vector<graphs::PairLabel>> heuristic_labels(const std::vector<scene::Scene>& scenes,
                                                             graphs::Strategy strategy,
                                                             const scene::AgentTypeTable& types,
                                                             bool symmetric_eps = false);

ClassifierReport evaluate_classifier(PairClassifier& classifier, const std::vector<scene::Scene>& scenes,
                                     graphs::Strategy strategy, const scene::AgentTypeTable& types,
                                     bool symmetric_eps = false);

// Weighted cross-entropy training on heuristic labels, both pair orientations. Keeps the
// parameters with the best held-out accuracy. Class weights are inverse training frequencies
// normalized to mean 1.
ClassifierReport pretrain_classifier(PairClassifier& classifier, const std::vector<scene::Scene>& train,
                                     const std::vector<scene::Scene>& val, graphs::Strategy strategy,
                                     const ClassifierConfig& config, const scene::AgentTypeTable& types,
                                     const Logger& log = {});

}  // namespace gmop::model
