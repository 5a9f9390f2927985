#pragma once

#include "gmop/model/common.hpp"
#include "gmop/model/frame.hpp"
#include "gmop/neural/layers.hpp"
#include "gmop/scene.hpp"

#include <cstdint>
#include <vector>

namespace gmop::model {

using neural::ParamStore;
using neural::Tape;
using neural::Var;
using neural::Vec;

struct AutoencoderConfig {
  int hidden = 64;
  int latent_dim = 16;
  int steps = 2000;
  int batch_size = 32;
  double lr = 2e-3;
  double clip = 5.0;
  std::uint64_t seed = 0;
  int eval_every = 250;
};

// GRU sequence autoencoder over future displacements in the agent frame. The latent is
// standardized with training-set statistics so the flow sees roughly unit-scale inputs.
class TrajectoryAutoencoder {
 public:
  TrajectoryAutoencoder() = default;
  TrajectoryAutoencoder(int n_future, const AutoencoderConfig& config);

  ParamStore store;

  const AutoencoderConfig& config() const { return config_; }
  int n_future() const { return n_future_; }
  int latent_dim() const { return static_cast<int>(to_latent_.out); }
  int hidden() const { return static_cast<int>(enc_.hidden); }

  Var encode(Tape& tape, const std::vector<Point>& local_deltas);
  // Local-frame displacements in meters.
  std::vector<Var> decode(Tape& tape, Var latent);

  Vec encode(const std::vector<Point>& local_deltas);
  std::vector<Point> decode(const Vec& latent);
  // Latent of an agent's ground-truth future.
  Vec encode_future(const scene::Agent& agent);

  double displacement_scale() const;
  void set_displacement_scale(double scale);
  void set_latent_stats(const Vec& mean, const Vec& stddev);

 private:
  AutoencoderConfig config_;
  int n_future_ = 0;
  neural::GruCell enc_;
  neural::Dense to_latent_;
  neural::Dense from_latent_;
  neural::GruCell dec_;
  neural::Dense head_;
  neural::ParamId scale_ = 0;
  neural::ParamId latent_mean_ = 0;
  neural::ParamId latent_std_ = 0;
};

struct ReconstructionError {
  double mean_m = 0.0;   // mean position error over all steps
  double final_m = 0.0;  // mean position error at the last step
};

ReconstructionError reconstruction_error(TrajectoryAutoencoder& ae, const std::vector<scene::Scene>& scenes);

struct AutoencoderCurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double val_error_m = 0.0;
};

struct AutoencoderReport {
  std::vector<AutoencoderCurvePoint> curve;
  ReconstructionError val;
};

// Minimizes displacement reconstruction error, then fits latent standardization statistics.
// A non-finite loss restores the last good parameters and throws NumericError.
AutoencoderReport pretrain_autoencoder(TrajectoryAutoencoder& ae, const std::vector<scene::Scene>& train,
                                       const std::vector<scene::Scene>& val, const AutoencoderConfig& config,
                                       const Logger& log = {});

}  // namespace gmop::model
