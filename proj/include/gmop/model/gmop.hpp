#pragma once

#include "gmop/error.hpp"
#include "gmop/flow.hpp"
#include "gmop/graphs.hpp"
#include "gmop/model/autoencoder.hpp"
#include "gmop/model/classifier.hpp"
#include "gmop/model/common.hpp"
#include "gmop/model/context.hpp"
#include "gmop/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace gmop::model {

struct GmopConfig {
  graphs::Strategy strategy = graphs::Strategy::Independence;
  double euclidean_eps = 20.0;
  ContextConfig context;
  int flow_layers = 8;
  int flow_hidden = 64;
  double scale_clamp = 5.0;
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  // Cosine decay from lr to lr * lr_final_fraction over the epochs.
  double lr_final_fraction = 0.1;
  double clip = 5.0;
  std::uint64_t seed = 0;
  // Architecture of the jointly trained classifier of the no-heuristic variant.
  ClassifierConfig classifier;
};

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double best_val_nll = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // epoch 0 is the untrained initialization
  int best_epoch = 0;
  double initial_val_nll = 0.0;
  double best_val_nll = 0.0;
};

// Graph-factorized joint flow over autoencoder latents:
// -log p(Y | C) = -sum_a log p(y_a | C_a, sum of parent latents).
class GmopModel {
 public:
  // Classifier strategies other than no-heuristic need a pretrained classifier, which stays frozen.
  // The no-heuristic variant builds its own classifier from config.classifier when none is given.
  // Throws DependencyError when a required classifier is missing.
  GmopModel(const GmopConfig& config, TrajectoryAutoencoder autoencoder,
            std::optional<PairClassifier> classifier = std::nullopt);

  ParamStore store;

  const GmopConfig& config() const { return config_; }
  graphs::Strategy strategy() const { return config_.strategy; }
  TrajectoryAutoencoder& autoencoder() { return autoencoder_; }
  PairClassifier* classifier() { return classifier_ ? &*classifier_ : nullptr; }
  const ContextEncoder& context() const { return context_; }
  const flow::FlowStack& flow() const { return flow_; }
  int latent_dim() const { return autoencoder_.latent_dim(); }
  int n_future() const { return autoencoder_.n_future(); }

  bool trained() const { return trained_; }
  void set_trained(bool trained) { trained_ = trained; }

  // Interaction graph from past trajectories only.
  graphs::InteractionGraph build_graph(const scene::ObservedScene& scene);

  // Autoencoder latents of the ground-truth futures, in agent order.
  std::vector<Vec> target_latents(const scene::Scene& scene);

  // `graph` must be a DAG over the scene agents (ContractError otherwise). Parent latents enter
  // the pool unweighted, except for the no-heuristic variant which weights them by edge weight.
  Var joint_scene_nll(Tape& tape, const scene::ObservedScene& scene, const std::vector<Vec>& latents,
                      const graphs::InteractionGraph& graph, const std::vector<Var>& edge_weights = {});
  double joint_scene_nll(const scene::Scene& scene, const graphs::InteractionGraph& graph);
  // Uses the model's own graph.
  double joint_scene_nll(const scene::Scene& scene);
  // -log p(y_a | C_a, parents) for the agent at `index`, evaluated on its own.
  double agent_conditional_nll(const scene::Scene& scene, const graphs::InteractionGraph& graph, std::size_t index);
  // Training objective for one scene: the no-heuristic variant routes class probabilities into
  // the edge weights so the classifier is trained jointly.
  Var training_nll(Tape& tape, const scene::ObservedScene& scene, const std::vector<Vec>& latents,
                   const graphs::InteractionGraph* fixed_graph);

  // Ancestral sampling in topological order. Throws StateError for an untrained model.
  std::vector<scene::SceneSample> predict_scene(const scene::ObservedScene& scene, int n_samples,
                                                std::uint64_t seed);
  // -joint_scene_nll with the model's own graph. Throws StateError for an untrained model.
  double scene_log_likelihood(const scene::Scene& scene);

  // All trainable stores (model, plus the classifier for the no-heuristic variant).
  std::vector<ParamStore*> trainable_stores();

 private:
  Vec conditioning_pool(const std::vector<Vec>& latents, const graphs::InteractionGraph& graph, std::size_t index,
                        const std::vector<bool>* ready) const;
  std::vector<Vec> context_values(const scene::ObservedScene& scene, const graphs::InteractionGraph& graph);
  void check_graph(const scene::ObservedScene& scene, const graphs::InteractionGraph& graph) const;

  GmopConfig config_;
  TrajectoryAutoencoder autoencoder_;
  std::optional<PairClassifier> classifier_;
  ContextEncoder context_;
  flow::FlowStack flow_;
  bool trained_ = false;
};

// Raised when training diverges; the model already holds the best parameters seen so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainReport report) : NumericError(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

// Minibatch Adam on the mean joint NLL with teacher-forced parent latents. Keeps the parameters
// with the best validation NLL (epoch 0 included). A non-finite loss restores them, marks the model trained
// and throws TrainingDiverged.
TrainReport train(GmopModel& model, const std::vector<scene::Scene>& train_scenes,
                  const std::vector<scene::Scene>& val_scenes, const Logger& log = {});

// Mean joint NLL over scenes under the model's own graphs.
double mean_joint_nll(GmopModel& model, const std::vector<scene::Scene>& scenes);

}  // namespace gmop::model
