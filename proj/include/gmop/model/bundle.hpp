#pragma once

#include "gmop/model/autoencoder.hpp"
#include "gmop/model/classifier.hpp"
#include "gmop/model/gmop.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gmop::model {

// Fingerprint of a scene list (FNV-1a of its serialized form).
std::uint64_t scenes_hash(const std::vector<scene::Scene>& scenes);

// Free-form provenance stored in artifact manifests. `run_config_json` is a JSON object echoing the
// effective configuration of the producing command; empty means none.
struct ArtifactInfo {
  std::uint64_t train_hash = 0;
  std::uint64_t val_hash = 0;
  std::string run_config_json;
  // "complete", or "diverged" when training aborted and the bundle holds the best parameters before it.
  std::string status = "complete";
};

// <dir>/autoencoder.json + autoencoder.ckpt
void save_autoencoder(TrajectoryAutoencoder& ae, const std::filesystem::path& dir, const ArtifactInfo& info = {});
// Throws DependencyError when the directory holds no autoencoder.
TrajectoryAutoencoder load_autoencoder(const std::filesystem::path& dir);

// <dir>/classifier.json + classifier.ckpt; `strategy` records the heuristic that produced the labels.
void save_classifier(PairClassifier& classifier, graphs::Strategy strategy, const std::filesystem::path& dir,
                     const ArtifactInfo& info = {});
// Throws DependencyError when the directory holds no classifier.
PairClassifier load_classifier(const std::filesystem::path& dir, graphs::Strategy* strategy = nullptr);

// CSV with columns epoch,train_nll,val_nll,best_val_nll.
std::string epoch_log_csv(const TrainReport& report);

// Bundle directory: manifest.json, model.ckpt, autoencoder.ckpt, classifier.ckpt (classifier variants)
// and epoch_log.csv.
void save_bundle(GmopModel& model, const TrainReport& report, const std::filesystem::path& dir,
                 const ArtifactInfo& info = {});
// Returns a trained model. Throws IoError for a missing or malformed bundle.
GmopModel load_bundle(const std::filesystem::path& dir);

GmopConfig gmop_config_from_json(const std::string& text);
std::string gmop_config_to_json(const GmopConfig& config);

}  // namespace gmop::model
