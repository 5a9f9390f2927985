#include "gmop/cli.hpp"

#include "gmop/error.hpp"
#include "gmop/eval.hpp"
#include "gmop/generator.hpp"
#include "gmop/graphs.hpp"
#include "gmop/model/bundle.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace gmop::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage problems detected after argument parsing (missing inputs, bad names, bad ranges).
class UsageError : public Error {
  using Error::Error;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------------------------
// Options

struct GenerateOptions {
  std::string out;
  std::vector<std::string> templates{"crossing-intersection"};
  int n = 100;
  std::uint64_t seed = 0;
  std::string preset = "interaction-like";
  int min_agents = 2;
  int max_agents = 4;
  double noise = 0.05;
  double random_priority = 0.0;
};

struct GraphsOptions {
  std::string scenes;
  std::vector<std::string> strategies{"independence",          "euclidean",        "crossing",
                                      "hypothetical-crossing", "flipped-crossing", "flipped-hypothetical-crossing"};
  std::string classifier;
  std::string out;
  std::string report;
  double euclidean_eps = 20.0;
  bool symmetric_eps = false;
};

struct DataOptions {
  std::string scenes;
  std::string val_scenes;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct PretrainOptions {
  DataOptions data;
  std::string component = "autoencoder";
  std::string strategy = "crossing";
  std::string out;
  std::uint64_t seed = 0;
  int ae_steps = 2000;
  int ae_hidden = 64;
  int latent_dim = 16;
  int ae_batch_size = 32;
  double ae_lr = 2e-3;
  int cls_epochs = 20;
  int cls_batch_size = 64;
  double cls_lr = 2e-3;
  int enc_dim = 32;
  int embed_dim = 64;
  bool symmetric_eps = false;
};

struct TrainOptions {
  DataOptions data;
  std::string variant = "independence";
  std::string artifacts;
  std::string classifier;
  std::string out;
  std::uint64_t seed = 0;
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-3;
  double lr_final_fraction = 0.1;
  double clip = 5.0;
  int flow_layers = 8;
  int flow_hidden = 64;
  int context_dim = 32;
  int past_hidden = 32;
  int depth = 1;
  double euclidean_eps = 20.0;
};

struct EvaluateOptions {
  std::string bundle;
  std::string scenes;
  int samples = 6;
  int max_samples = 100;
  std::uint64_t eval_seed = 0;
  double bandwidth_floor = 1e-3;
  std::string out;
};

struct CompareOptions {
  std::vector<std::string> inputs;
  std::string out;
  std::string plots;
};

// ---------------------------------------------------------------------------------------------
// Helpers

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(fmt::format("{} '{}' does not exist", what, path));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// Exclusive writer lock on an output directory, released on scope exit.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError(fmt::format("'{}' is locked by another writer (remove {} if stale)", dir.string(),
                                      path_.string()));
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

graphs::Strategy strategy_arg(const std::string& name) {
  try {
    return graphs::parse_strategy(name);
  } catch (const std::exception&) {
    throw UsageError(fmt::format("unknown strategy '{}'", name));
  }
}

json typed(const std::string& text) {
  if (text.empty()) return text;
  std::size_t used = 0;
  try {
    if (text.find_first_of(".eE") == std::string::npos) {
      const long long v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } else {
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    }
  } catch (const std::exception&) {
  }
  return text;
}

// Effective configuration of a subcommand: every option's final value after flag, file and default precedence.
json effective_config(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "config") continue;
    const std::string& key = names.front();
    if (opt->get_type_size() == 0) {
      out[key] = opt->count() > 0;
      continue;
    }
    const auto& results = opt->results();
    std::vector<std::string> values = results;
    if (values.empty()) {
      const std::string def = opt->get_default_str();
      if (opt->get_expected_max() > 1) {
        out[key] = json::array();
        std::string inner = def;
        if (inner.size() >= 2 && inner.front() == '[' && inner.back() == ']') inner = inner.substr(1, inner.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item.erase(0, item.find_first_not_of(' '));
          if (!item.empty()) out[key].push_back(typed(item));
        }
      } else {
        out[key] = typed(def);
      }
      continue;
    }
    if (opt->get_expected_max() > 1) {
      out[key] = json::array();
      for (const auto& v : values) out[key].push_back(typed(v));
    } else {
      out[key] = typed(values.back());
    }
  }
  return out;
}

std::pair<std::vector<scene::Scene>, std::vector<scene::Scene>> load_split(const DataOptions& d) {
  require_file(d.scenes, "--scenes");
  auto scenes = scene::load_scenes(d.scenes);
  if (scenes.empty()) throw UsageError("'" + d.scenes + "' holds no scenes");
  if (!d.val_scenes.empty()) {
    require_file(d.val_scenes, "--val-scenes");
    auto val = scene::load_scenes(d.val_scenes);
    if (val.empty()) throw UsageError("'" + d.val_scenes + "' holds no scenes");
    return {std::move(scenes), std::move(val)};
  }
  if (!(d.val_fraction > 0.0 && d.val_fraction < 1.0)) throw UsageError("--val-fraction must lie in (0, 1)");
  auto split = scene::split_dataset(scenes, 1.0 - d.val_fraction, d.split_seed);
  if (split.first.empty() || split.second.empty()) throw UsageError("too few scenes to split off a validation set");
  return split;
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--scenes", d.scenes, "Scene file (JSON lines)")->required();
  sub->add_option("--val-scenes", d.val_scenes, "Separate validation scene file");
  sub->add_option("--val-fraction", d.val_fraction, "Validation share when splitting --scenes")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--split-seed", d.split_seed, "Seed of the train/validation split");
}

// ---------------------------------------------------------------------------------------------
// generate

int cmd_generate(const GenerateOptions& o, const json& config, Io io) {
  if (o.n < 1) throw UsageError("--n must be at least 1");
  if (o.out.empty()) throw UsageError("--out is required");
  scene::GeneratorConfig g;
  g.templates.clear();
  for (const auto& name : o.templates) {
    try {
      g.templates.push_back(scene::parse_template(name));
    } catch (const std::exception&) {
      throw UsageError(fmt::format(
          "unknown template '{}' (crossing-intersection, merge, roundabout-entry, independent-lanes)", name));
    }
  }
  if (g.templates.empty()) throw UsageError("at least one --template is required");
  try {
    g.apply_preset(scene::horizon_preset(o.preset));
  } catch (const std::exception&) {
    throw UsageError(fmt::format("unknown preset '{}'", o.preset));
  }
  g.count = o.n;
  g.min_agents = o.min_agents;
  g.max_agents = o.max_agents;
  g.noise_std = o.noise;
  g.random_priority_prob = o.random_priority;
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto scenes = scene::generate_synthetic(g, o.seed);
  scene::save_scenes(scenes, o.out);

  json mix = json::object();
  for (const auto& s : scenes) {
    const std::string name = s.annotations ? s.annotations->scenario : "unknown";
    mix[name] = mix.value(name, 0) + 1;
  }
  std::size_t agents = 0;
  for (const auto& s : scenes) agents += s.agents.size();
  const json manifest = {{"command", "generate"},
                         {"config", config},
                         {"scenes", scenes.size()},
                         {"agents", agents},
                         {"seed", o.seed},
                         {"n_past", g.n_past},
                         {"n_future", g.n_future},
                         {"sampling_hz", g.sampling_hz},
                         {"template_mix", mix},
                         {"data_hash", fmt::format("{:016x}", model::scenes_hash(scenes))}};
  write_text(o.out + ".manifest.json", manifest.dump(2) + "\n");
  io.out << fmt::format("wrote {} scenes ({} agents, n_past={}, n_future={}) to {}\n", scenes.size(), agents,
                        g.n_past, g.n_future, o.out);
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// graphs

// +1: lower index influences higher, -1: the reverse, 0: no edge.
using PairDirections = std::map<std::pair<std::size_t, std::size_t>, int>;

PairDirections directions_of(const graphs::InteractionGraph& g) {
  PairDirections out;
  for (const auto& e : g.edges()) {
    const std::size_t a = g.index_of(e.src), b = g.index_of(e.dst);
    out[{std::min(a, b), std::max(a, b)}] = a < b ? 1 : -1;
  }
  return out;
}

PairDirections truth_directions(const scene::Scene& s) {
  PairDirections out;
  for (const auto& i : s.annotations->interactions) {
    const auto a = s.index_of(i.influencer), b = s.index_of(i.influencee);
    if (!a || !b) continue;
    out[{std::min(*a, *b), std::max(*a, *b)}] = *a < *b ? 1 : -1;
  }
  return out;
}

int cmd_graphs(const GraphsOptions& o, const json& config, Io io) {
  require_file(o.scenes, "--scenes");
  std::vector<graphs::Strategy> strategies;
  for (const auto& name : o.strategies) strategies.push_back(strategy_arg(name));
  std::optional<model::PairClassifier> classifier;
  for (auto s : strategies) {
    if (s == graphs::Strategy::NoHeuristic && !classifier) {
      if (o.classifier.empty()) throw DependencyError("strategy 'no-heuristic' needs --classifier with a classifier");
      classifier = model::load_classifier(o.classifier);
    }
  }
  const auto scenes = scene::load_scenes(o.scenes);
  const scene::AgentTypeTable types;

  std::vector<std::string> names;
  for (auto s : strategies) names.emplace_back(graphs::strategy_name(s));
  const bool have_truth = std::all_of(scenes.begin(), scenes.end(), [](const auto& s) { return s.annotations; });
  if (have_truth) names.push_back("ground-truth");
  const std::size_t k = names.size();
  std::vector<std::vector<std::size_t>> compared(k, std::vector<std::size_t>(k, 0));
  std::vector<std::vector<std::size_t>> agreed(k, std::vector<std::size_t>(k, 0));

  std::string dump;
  for (const auto& s : scenes) {
    const auto observed = scene::observe(s);
    std::vector<scene::AgentId> nodes;
    for (const auto& a : s.agents) nodes.push_back(a.id);
    std::vector<PairDirections> dirs;
    for (auto strategy : strategies) {
      graphs::InteractionGraph g;
      switch (strategy) {
        case graphs::Strategy::Independence: g = graphs::independence_graph(observed); break;
        case graphs::Strategy::Euclidean: g = graphs::euclidean_graph(observed, o.euclidean_eps); break;
        case graphs::Strategy::NoHeuristic: g = model::predicted_graph(*classifier, observed); break;
        default: {
          auto options = graphs::crossing_options(strategy);
          options.symmetric_eps = o.symmetric_eps;
          g = graphs::graph_from_labels(nodes, graphs::crossing_labels(s, types, options));
        }
      }
      dump += graphs::graph_to_json(g, graphs::strategy_name(strategy), s.scene_id) + "\n";
      dirs.push_back(directions_of(g));
    }
    if (have_truth) dirs.push_back(truth_directions(s));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        for (const auto& [pair, d] : dirs[i]) {
          const auto it = dirs[j].find(pair);
          if (it == dirs[j].end()) continue;
          ++compared[i][j];
          agreed[i][j] += it->second == d;
        }
      }
    }
  }

  std::string csv = "strategy_a,strategy_b,compared_pairs,direction_agreement\n";
  std::string table = fmt::format("{:<32}", "direction agreement");
  for (const auto& n : names) table += fmt::format(" {:>12.12}", n);
  table += "\n";
  for (std::size_t i = 0; i < k; ++i) {
    table += fmt::format("{:<32}", names[i]);
    for (std::size_t j = 0; j < k; ++j) {
      const bool any = compared[i][j] > 0;
      const double rate = any ? static_cast<double>(agreed[i][j]) / static_cast<double>(compared[i][j]) : 0.0;
      table += any ? fmt::format(" {:>12.4f}", rate) : fmt::format(" {:>12}", "-");
      csv += fmt::format("{},{},{},{}\n", names[i], names[j], compared[i][j], any ? fmt::format("{}", rate) : "");
    }
    table += "\n";
  }
  io.out << fmt::format("{} scenes, {} strategies\n", scenes.size(), strategies.size()) << table;
  if (!o.out.empty()) write_text(o.out, dump);
  if (!o.report.empty()) {
    write_text(o.report, csv);
    write_text(o.report + ".manifest.json", json{{"command", "graphs"}, {"config", config}}.dump(2) + "\n");
  }
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const PretrainOptions& o, const json& config, Io io) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.component != "autoencoder" && o.component != "classifier") {
    throw UsageError("--component must be 'autoencoder' or 'classifier'");
  }
  const auto [train_set, val_set] = load_split(o.data);
  model::ArtifactInfo info;
  info.train_hash = model::scenes_hash(train_set);
  info.val_hash = model::scenes_hash(val_set);
  info.run_config_json = json{{"command", "pretrain"}, {"config", config}}.dump();
  DirectoryLock lock(o.out);
  const auto log = [&](const std::string& line) { io.out << line << "\n"; };

  if (o.component == "autoencoder") {
    model::AutoencoderConfig ac;
    ac.hidden = o.ae_hidden;
    ac.latent_dim = o.latent_dim;
    ac.steps = o.ae_steps;
    ac.batch_size = o.ae_batch_size;
    ac.lr = o.ae_lr;
    ac.seed = o.seed;
    ac.eval_every = std::max(1, std::min(250, o.ae_steps));
    model::TrajectoryAutoencoder ae(static_cast<int>(train_set.front().n_future()), ac);
    const auto report = model::pretrain_autoencoder(ae, train_set, val_set, ac, log);
    model::save_autoencoder(ae, o.out, info);
    std::string curve = "step,train_loss,val_error_m\n";
    for (const auto& p : report.curve) curve += fmt::format("{},{},{}\n", p.step, p.train_loss, p.val_error_m);
    write_text(fs::path(o.out) / "autoencoder_curve.csv", curve);
    io.out << fmt::format("held-out reconstruction error: mean {:.4f} m, final step {:.4f} m\n", report.val.mean_m,
                          report.val.final_m);
    return kOk;
  }

  const auto strategy = strategy_arg(o.strategy);
  if (!graphs::is_crossing_family(strategy)) {
    throw UsageError(fmt::format("classifier pretraining needs a crossing-family strategy, got '{}'", o.strategy));
  }
  model::ClassifierConfig cc;
  cc.enc_dim = o.enc_dim;
  cc.embed_dim = o.embed_dim;
  cc.epochs = o.cls_epochs;
  cc.batch_size = o.cls_batch_size;
  cc.lr = o.cls_lr;
  cc.seed = o.seed;
  cc.symmetric_eps = o.symmetric_eps;
  model::PairClassifier classifier(cc);
  const auto report = model::pretrain_classifier(classifier, train_set, val_set, strategy, cc, {}, log);
  model::save_classifier(classifier, strategy, o.out, info);
  std::string curve = "epoch,train_loss,val_accuracy\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    curve += fmt::format("{},{},{}\n", e + 1, report.epoch_loss[e], report.epoch_accuracy[e]);
  }
  write_text(fs::path(o.out) / "classifier_curve.csv", curve);
  io.out << fmt::format("held-out pair accuracy: {:.4f} over {} pairs\n", report.accuracy, report.eval_pairs);
  static const char* kClassNames[] = {"none", "m->n", "n->m"};
  io.out << "confusion (rows: heuristic label, columns: predicted)\n";
  io.out << fmt::format("{:>8} {:>8} {:>8} {:>8}   recall\n", "", kClassNames[0], kClassNames[1], kClassNames[2]);
  for (int c = 0; c < graphs::kNumClasses; ++c) {
    const auto& row = report.confusion[static_cast<std::size_t>(c)];
    io.out << fmt::format("{:>8} {:>8} {:>8} {:>8}   {:.4f}\n", kClassNames[c], row[0], row[1], row[2],
                          report.recall[static_cast<std::size_t>(c)]);
  }
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// train

int cmd_train(const TrainOptions& o, const json& config, Io io) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.artifacts.empty()) throw UsageError("--artifacts is required");
  const auto strategy = strategy_arg(o.variant);
  const auto [train_set, val_set] = load_split(o.data);

  auto ae = model::load_autoencoder(o.artifacts);
  std::optional<model::PairClassifier> classifier;
  if (graphs::is_crossing_family(strategy)) {
    const std::string dir = o.classifier.empty() ? o.artifacts : o.classifier;
    graphs::Strategy trained_for{};
    classifier = model::load_classifier(dir, &trained_for);
    if (trained_for != strategy) {
      throw DependencyError(fmt::format("classifier in '{}' was pretrained for '{}', variant '{}' needs its own",
                                        dir, graphs::strategy_name(trained_for), o.variant));
    }
  }

  model::GmopConfig mc;
  mc.strategy = strategy;
  mc.euclidean_eps = o.euclidean_eps;
  mc.context.past_hidden = o.past_hidden;
  mc.context.context_dim = o.context_dim;
  mc.context.message_dim = o.context_dim;
  mc.context.depth = o.depth;
  mc.flow_layers = o.flow_layers;
  mc.flow_hidden = o.flow_hidden;
  mc.epochs = o.epochs;
  mc.batch_size = o.batch_size;
  mc.lr = o.lr;
  mc.lr_final_fraction = o.lr_final_fraction;
  mc.clip = o.clip;
  mc.seed = o.seed;
  model::GmopModel m(mc, std::move(ae), std::move(classifier));

  model::ArtifactInfo info;
  info.train_hash = model::scenes_hash(train_set);
  info.val_hash = model::scenes_hash(val_set);
  info.run_config_json = json{{"command", "train"}, {"config", config}}.dump();
  DirectoryLock lock(o.out);
  const auto log = [&](const std::string& line) { io.out << line << "\n"; };
  try {
    const auto report = model::train(m, train_set, val_set, log);
    model::save_bundle(m, report, o.out, info);
    io.out << fmt::format("best validation joint NLL {:.4f} at epoch {} (initial {:.4f}); bundle in {}\n",
                          report.best_val_nll, report.best_epoch, report.initial_val_nll, o.out);
  } catch (const model::TrainingDiverged& e) {
    info.status = "diverged";
    model::save_bundle(m, e.report(), o.out, info);
    throw;
  }
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const EvaluateOptions& o, const json& config, Io io) {
  if (o.bundle.empty() || !fs::is_regular_file(fs::path(o.bundle) / "manifest.json")) {
    throw UsageError(fmt::format("no model bundle at '{}'", o.bundle));
  }
  require_file(o.scenes, "--scenes");
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.samples < 1 || o.max_samples < 2) throw UsageError("--samples >= 1 and --max-samples >= 2 required");
  auto m = model::load_bundle(o.bundle);
  const auto scenes = scene::load_scenes(o.scenes);
  if (scenes.empty()) throw UsageError("'" + o.scenes + "' holds no scenes");
  eval::EvalConfig ec;
  ec.samples = o.samples;
  ec.max_samples = o.max_samples;
  ec.eval_seed = o.eval_seed;
  ec.bandwidth_floor = o.bandwidth_floor;
  const auto report = eval::evaluate_variant(m, scenes, ec);
  eval::write_metrics_csv({report}, o.out);
  write_text(o.out + ".manifest.json", json{{"command", "evaluate"},
                                            {"config", config},
                                            {"scenes_hash", fmt::format("{:016x}", model::scenes_hash(scenes))}}
                                               .dump(2) +
                                           "\n");
  io.out << eval::metrics_csv_header() << "\n" << eval::metrics_csv_row(report) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// compare

int cmd_compare(const CompareOptions& o, const json& config, Io io) {
  std::vector<fs::path> files;
  for (const auto& in : o.inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(in)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
        std::ifstream f(entry.path());
        std::string header;
        if (std::getline(f, header) && header == eval::metrics_csv_header()) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw UsageError(fmt::format("'{}' does not exist", in));
    }
  }
  std::vector<eval::MetricsReport> reports;
  for (const auto& f : files) {
    const auto rows = eval::read_metrics_csv(f);
    reports.insert(reports.end(), rows.begin(), rows.end());
  }
  if (reports.empty()) throw UsageError("no evaluated runs found");

  const auto rows = eval::aggregate_runs(reports);
  const auto mark = [](const eval::MetricSummary& m) { return m.best ? "*" : " "; };
  io.out << fmt::format("{:<30} {:>4}  {:>20}  {:>20}  {:>22}  {:>18}\n", "variant", "runs", "joint minADE [m]",
                        "joint minFDE [m]", "joint NLL [nats]", "classifier acc");
  for (const auto& r : rows) {
    io.out << fmt::format("{:<30} {:>4}  {:>8.4f} ± {:<8.4f}{}  {:>8.4f} ± {:<8.4f}{}  {:>9.3f} ± {:<9.3f}{}  {}\n",
                          r.variant, r.runs, r.joint_min_ade.mean, r.joint_min_ade.std, mark(r.joint_min_ade),
                          r.joint_min_fde.mean, r.joint_min_fde.std, mark(r.joint_min_fde), r.joint_nll.mean,
                          r.joint_nll.std, mark(r.joint_nll),
                          r.classifier_accuracy ? fmt::format("{:.4f}{}", r.classifier_accuracy->mean,
                                                              mark(*r.classifier_accuracy))
                                                : std::string("-"));
  }
  auto ranked = rows;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.joint_nll.mean < b.joint_nll.mean; });
  io.out << "ranking by mean joint NLL:";
  for (std::size_t i = 0; i < ranked.size(); ++i) io.out << (i ? " <= " : " ") << ranked[i].variant;
  io.out << "\n";

  if (!o.out.empty()) {
    write_text(o.out, eval::summary_csv(rows));
    write_text(o.out + ".manifest.json", json{{"command", "compare"},
                                              {"config", config},
                                              {"runs", reports.size()},
                                              {"inputs", [&] {
                                                 std::vector<std::string> out;
                                                 for (const auto& f : files) out.push_back(f.string());
                                                 return out;
                                               }()}}
                                                 .dump(2) +
                                             "\n");
  }
  if (!o.plots.empty()) {
    for (const std::string metric : {"joint_min_ade", "joint_min_fde", "joint_nll"}) {
      write_text(fs::path(o.plots) / (metric + ".svg"), eval::metric_plot_svg(reports, metric));
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// Config files: `key = value` lines, '#' comments. Keys are long option names of the subcommand.

std::vector<std::string> expand_config(CLI::App& sub, const std::string& path, const std::vector<std::string>& args) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("config file '{}' does not exist", path));
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos
                                                                                          : a.find('=') - 2));
  }
  std::vector<std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw UsageError(fmt::format("{}:{}: expected key = value", path, number));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt || key == "config") throw UsageError(fmt::format("{}:{}: unknown key '{}'", path, number, key));
    if (given.count(key)) continue;
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1" || value == "yes") out.push_back("--" + key);
      else if (value != "false" && value != "0" && value != "no") {
        throw UsageError(fmt::format("{}:{}: '{}' expects true or false", path, number, key));
      }
      continue;
    }
    if (opt->get_expected_max() > 1) {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.insert(out.end(), {"--" + key, item});
      }
    } else {
      out.insert(out.end(), {"--" + key, value});
    }
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const DependencyError*>(&e)) return kDependency;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e)) {
    return kValidation;
  }
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-factorized joint multi-agent trajectory prediction", "gmop"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write synthetic scenes");
  g->add_option("--out", gen.out, "Output scene file")->required();
  g->add_option("--template", gen.templates, "Scenario template (repeatable)");
  g->add_option("--n", gen.n, "Number of scenes");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--preset", gen.preset, "Horizon preset: argoverse-like, interaction-like, nuscenes-like, round-like");
  g->add_option("--min-agents", gen.min_agents, "Minimum agents per scene");
  g->add_option("--max-agents", gen.max_agents, "Maximum agents per scene");
  g->add_option("--noise", gen.noise, "Position noise std [m]");
  g->add_option("--random-priority", gen.random_priority, "Probability of a coin-flip passing order");

  GraphsOptions gr;
  auto* gs = app.add_subcommand("graphs", "Build interaction graphs and report label agreement");
  gs->add_option("--scenes", gr.scenes, "Scene file")->required();
  gs->add_option("--strategy", gr.strategies, "Strategy (repeatable)");
  gs->add_option("--classifier", gr.classifier, "Classifier directory, for no-heuristic");
  gs->add_option("--out", gr.out, "Graph dump (JSON lines)");
  gs->add_option("--report", gr.report, "Agreement CSV");
  gs->add_option("--euclidean-eps", gr.euclidean_eps, "Euclidean distance threshold [m]");
  gs->add_flag("--symmetric-eps", gr.symmetric_eps, "Crossing threshold from both agents' widths");

  PretrainOptions pre;
  auto* p = app.add_subcommand("pretrain", "Pretrain the trajectory autoencoder or the interaction classifier");
  add_data_options(p, pre.data);
  p->add_option("--component", pre.component, "autoencoder or classifier");
  p->add_option("--strategy", pre.strategy, "Heuristic providing classifier labels");
  p->add_option("--out", pre.out, "Artifact directory")->required();
  p->add_option("--seed", pre.seed, "Initialization and shuffling seed");
  p->add_option("--ae-steps", pre.ae_steps, "Autoencoder optimizer steps");
  p->add_option("--ae-hidden", pre.ae_hidden, "Autoencoder GRU width");
  p->add_option("--latent-dim", pre.latent_dim, "Autoencoder latent size");
  p->add_option("--ae-batch-size", pre.ae_batch_size, "Autoencoder batch size");
  p->add_option("--ae-lr", pre.ae_lr, "Autoencoder learning rate");
  p->add_option("--cls-epochs", pre.cls_epochs, "Classifier epochs");
  p->add_option("--cls-batch-size", pre.cls_batch_size, "Classifier batch size");
  p->add_option("--cls-lr", pre.cls_lr, "Classifier learning rate");
  p->add_option("--enc-dim", pre.enc_dim, "Classifier past encoder width");
  p->add_option("--embed-dim", pre.embed_dim, "Classifier embedding width");
  p->add_flag("--symmetric-eps", pre.symmetric_eps, "Crossing threshold from both agents' widths");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model variant");
  add_data_options(t, tr.data);
  t->add_option("--variant", tr.variant, "Graph strategy of the variant");
  t->add_option("--artifacts", tr.artifacts, "Directory with the pretrained autoencoder (and classifier)")
      ->required();
  t->add_option("--classifier", tr.classifier, "Classifier directory when not in --artifacts");
  t->add_option("--out", tr.out, "Bundle directory")->required();
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  t->add_option("--epochs", tr.epochs, "Training epochs");
  t->add_option("--batch-size", tr.batch_size, "Scenes per batch");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--lr-final-fraction", tr.lr_final_fraction, "Final learning rate as a fraction of --lr");
  t->add_option("--clip", tr.clip, "Gradient norm clip");
  t->add_option("--flow-layers", tr.flow_layers, "Coupling layers");
  t->add_option("--flow-hidden", tr.flow_hidden, "Conditioner width");
  t->add_option("--context-dim", tr.context_dim, "Context vector size");
  t->add_option("--past-hidden", tr.past_hidden, "Past encoder width");
  t->add_option("--depth", tr.depth, "Message-passing rounds");
  t->add_option("--euclidean-eps", tr.euclidean_eps, "Euclidean distance threshold [m]");

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Compute joint metrics of a bundle");
  e->add_option("--bundle", ev.bundle, "Bundle directory")->required();
  e->add_option("--scenes", ev.scenes, "Evaluation scene file")->required();
  e->add_option("--samples", ev.samples, "Joint samples for minADE/minFDE");
  e->add_option("--max-samples", ev.max_samples, "Joint samples for the KDE NLL");
  e->add_option("--eval-seed", ev.eval_seed, "Sampling seed");
  e->add_option("--bandwidth-floor", ev.bandwidth_floor, "Minimum KDE bandwidth [m]");
  e->add_option("--out", ev.out, "Metrics CSV")->required();

  CompareOptions cmp;
  auto* c = app.add_subcommand("compare", "Aggregate evaluated runs per variant");
  c->add_option("--inputs", cmp.inputs, "Metrics CSV files or directories")->required();
  c->add_option("--out", cmp.out, "Summary CSV");
  c->add_option("--plots", cmp.plots, "Directory for SVG plots");

  std::string config_path;
  for (auto* sub : {g, gs, p, t, e, c}) {
    sub->add_option("--config", config_path, "Key-value config file; flags override it");
  }

  std::vector<std::string> full = args;
  try {
    // Config-file entries become flags for options not given on the command line.
    if (!args.empty()) {
      CLI::App* sub = nullptr;
      for (auto* candidate : {g, gs, p, t, e, c}) {
        if (candidate->get_name() == args.front()) sub = candidate;
      }
      const auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
        return a == "--config" || a.rfind("--config=", 0) == 0;
      });
      if (sub && it != args.end()) {
        std::string path;
        if (*it == "--config") {
          if (it + 1 == args.end()) throw UsageError("--config needs a file");
          path = *(it + 1);
        } else {
          path = it->substr(9);
        }
        const auto extra = expand_config(*sub, path, args);
        full.insert(full.end(), extra.begin(), extra.end());
      }
    }
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kOk;
    }
    err << "usage error: " << pe.what() << "\n";
    return kUsage;
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << "\n";
    return kUsage;
  }

  Io io{out, err};
  try {
    CLI::App* sub = app.get_subcommands().front();
    const json config = effective_config(*sub);
    if (sub == g) return cmd_generate(gen, config, io);
    if (sub == gs) return cmd_graphs(gr, config, io);
    if (sub == p) return cmd_pretrain(pre, config, io);
    if (sub == t) return cmd_train(tr, config, io);
    if (sub == e) return cmd_evaluate(ev, config, io);
    return cmd_compare(cmp, config, io);
  } catch (const std::exception& ex) {
    const int code = exit_code_for(ex);
    static const char* kLabels[] = {"", "error", "usage error", "dependency error", "validation error",
                                    "numeric error"};
    err << kLabels[code] << ": " << ex.what() << "\n";
    return code;
  }
}

}  // namespace gmop::cli
