#include "gmop/model/bundle.hpp"

#include "gmop/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace gmop::model {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

json provenance(const ArtifactInfo& info) {
  json out = {{"train_hash", hex(info.train_hash)}, {"val_hash", hex(info.val_hash)}, {"status", info.status}};
  if (!info.run_config_json.empty()) out["run_config"] = json::parse(info.run_config_json);
  return out;
}

json to_json(const AutoencoderConfig& c) {
  return {{"hidden", c.hidden},         {"latent_dim", c.latent_dim}, {"steps", c.steps},
          {"batch_size", c.batch_size}, {"lr", c.lr},                 {"clip", c.clip},
          {"seed", c.seed},             {"eval_every", c.eval_every}};
}

AutoencoderConfig autoencoder_config(const json& j) {
  AutoencoderConfig c;
  c.hidden = j.at("hidden");
  c.latent_dim = j.at("latent_dim");
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.clip = j.at("clip");
  c.seed = j.at("seed");
  c.eval_every = j.at("eval_every");
  return c;
}

json to_json(const ClassifierConfig& c) {
  return {{"enc_dim", c.enc_dim}, {"embed_dim", c.embed_dim}, {"distance_scale", c.distance_scale},
          {"epochs", c.epochs},   {"batch_size", c.batch_size}, {"lr", c.lr},
          {"clip", c.clip},       {"seed", c.seed},           {"symmetric_eps", c.symmetric_eps}};
}

ClassifierConfig classifier_config(const json& j) {
  ClassifierConfig c;
  c.enc_dim = j.at("enc_dim");
  c.embed_dim = j.at("embed_dim");
  c.distance_scale = j.at("distance_scale");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.clip = j.at("clip");
  c.seed = j.at("seed");
  c.symmetric_eps = j.at("symmetric_eps");
  return c;
}

json to_json(const GmopConfig& c) {
  return {{"strategy", std::string(graphs::strategy_name(c.strategy))},
          {"euclidean_eps", c.euclidean_eps},
          {"context",
           {{"past_hidden", c.context.past_hidden},
            {"context_dim", c.context.context_dim},
            {"message_dim", c.context.message_dim},
            {"depth", c.context.depth},
            {"distance_scale", c.context.distance_scale}}},
          {"flow_layers", c.flow_layers},
          {"flow_hidden", c.flow_hidden},
          {"scale_clamp", c.scale_clamp},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_final_fraction", c.lr_final_fraction},
          {"clip", c.clip},
          {"seed", c.seed},
          {"classifier", to_json(c.classifier)}};
}

GmopConfig gmop_config(const json& j) {
  GmopConfig c;
  c.strategy = graphs::parse_strategy(j.at("strategy").get<std::string>());
  c.euclidean_eps = j.at("euclidean_eps");
  const auto& ctx = j.at("context");
  c.context.past_hidden = ctx.at("past_hidden");
  c.context.context_dim = ctx.at("context_dim");
  c.context.message_dim = ctx.at("message_dim");
  c.context.depth = ctx.at("depth");
  c.context.distance_scale = ctx.at("distance_scale");
  c.flow_layers = j.at("flow_layers");
  c.flow_hidden = j.at("flow_hidden");
  c.scale_clamp = j.at("scale_clamp");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.lr_final_fraction = j.at("lr_final_fraction");
  c.clip = j.at("clip");
  c.seed = j.at("seed");
  c.classifier = classifier_config(j.at("classifier"));
  return c;
}

}  // namespace

std::uint64_t scenes_hash(const std::vector<scene::Scene>& scenes) {
  return scene::fnv1a_64(scene::serialize_scenes(scenes));
}

void save_autoencoder(TrajectoryAutoencoder& ae, const fs::path& dir, const ArtifactInfo& info) {
  fs::create_directories(dir);
  neural::save_checkpoint(ae.store, dir / "autoencoder.ckpt");
  const json manifest = {{"format", "gmop-autoencoder"}, {"version", kManifestVersion},
                         {"n_future", ae.n_future()},     {"config", to_json(ae.config())},
                         {"checkpoint", "autoencoder.ckpt"}, {"provenance", provenance(info)}};
  write_text(dir / "autoencoder.json", manifest.dump(2) + "\n");
}

TrajectoryAutoencoder load_autoencoder(const fs::path& dir) {
  if (!fs::exists(dir / "autoencoder.json") || !fs::exists(dir / "autoencoder.ckpt")) {
    throw DependencyError("missing autoencoder artifact in " + dir.string());
  }
  const json manifest = read_json(dir / "autoencoder.json");
  try {
    TrajectoryAutoencoder ae(manifest.at("n_future").get<int>(), autoencoder_config(manifest.at("config")));
    neural::load_checkpoint_into(ae.store, dir / "autoencoder.ckpt");
    return ae;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", (dir / "autoencoder.json").string(), e.what()));
  }
}

void save_classifier(PairClassifier& classifier, graphs::Strategy strategy, const fs::path& dir,
                     const ArtifactInfo& info) {
  fs::create_directories(dir);
  neural::save_checkpoint(classifier.store, dir / "classifier.ckpt");
  const json manifest = {{"format", "gmop-classifier"},
                         {"version", kManifestVersion},
                         {"strategy", std::string(graphs::strategy_name(strategy))},
                         {"config", to_json(classifier.config())},
                         {"checkpoint", "classifier.ckpt"},
                         {"provenance", provenance(info)}};
  write_text(dir / "classifier.json", manifest.dump(2) + "\n");
}

PairClassifier load_classifier(const fs::path& dir, graphs::Strategy* strategy) {
  if (!fs::exists(dir / "classifier.json") || !fs::exists(dir / "classifier.ckpt")) {
    throw DependencyError("missing classifier artifact in " + dir.string());
  }
  const json manifest = read_json(dir / "classifier.json");
  try {
    PairClassifier classifier(classifier_config(manifest.at("config")));
    neural::load_checkpoint_into(classifier.store, dir / "classifier.ckpt");
    if (strategy) *strategy = graphs::parse_strategy(manifest.at("strategy").get<std::string>());
    return classifier;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", (dir / "classifier.json").string(), e.what()));
  }
}

std::string epoch_log_csv(const TrainReport& report) {
  std::string out = "epoch,train_nll,val_nll,best_val_nll\n";
  for (const auto& e : report.epochs) {
    out += fmt::format("{},{},{},{}\n", e.epoch, e.train_nll, e.val_nll, e.best_val_nll);
  }
  return out;
}

void save_bundle(GmopModel& model, const TrainReport& report, const fs::path& dir, const ArtifactInfo& info) {
  fs::create_directories(dir);
  neural::save_checkpoint(model.store, dir / "model.ckpt");
  neural::save_checkpoint(model.autoencoder().store, dir / "autoencoder.ckpt");
  json components = {{"model", "model.ckpt"}, {"autoencoder", "autoencoder.ckpt"}};
  json classifier_json = nullptr;
  if (auto* c = model.classifier()) {
    neural::save_checkpoint(c->store, dir / "classifier.ckpt");
    components["classifier"] = "classifier.ckpt";
    classifier_json = to_json(c->config());
  }
  write_text(dir / "epoch_log.csv", epoch_log_csv(report));
  const json manifest = {{"format", "gmop-bundle"},
                         {"version", kManifestVersion},
                         {"variant", std::string(graphs::strategy_name(model.strategy()))},
                         {"config", to_json(model.config())},
                         {"n_future", model.n_future()},
                         {"autoencoder", to_json(model.autoencoder().config())},
                         {"classifier", classifier_json},
                         {"components", components},
                         {"best_epoch", report.best_epoch},
                         {"initial_val_nll", report.initial_val_nll},
                         {"best_val_nll", report.best_val_nll},
                         {"provenance", provenance(info)}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

GmopModel load_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw IoError("no model bundle at " + dir.string());
  const json manifest = read_json(dir / "manifest.json");
  try {
    if (manifest.at("format") != "gmop-bundle") throw IoError(dir.string() + " is not a model bundle");
    const auto config = gmop_config(manifest.at("config"));
    TrajectoryAutoencoder ae(manifest.at("n_future").get<int>(), autoencoder_config(manifest.at("autoencoder")));
    neural::load_checkpoint_into(ae.store, dir / "autoencoder.ckpt");
    std::optional<PairClassifier> classifier;
    if (!manifest.at("classifier").is_null()) {
      classifier.emplace(classifier_config(manifest.at("classifier")));
      neural::load_checkpoint_into(classifier->store, dir / "classifier.ckpt");
    }
    GmopModel model(config, std::move(ae), std::move(classifier));
    neural::load_checkpoint_into(model.store, dir / "model.ckpt");
    model.set_trained(true);
    return model;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", (dir / "manifest.json").string(), e.what()));
  }
}

GmopConfig gmop_config_from_json(const std::string& text) {
  try {
    return gmop_config(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::string gmop_config_to_json(const GmopConfig& config) { return to_json(config).dump(); }

}  // namespace gmop::model
