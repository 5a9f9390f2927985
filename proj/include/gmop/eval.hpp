#pragma once

#include "gmop/model/gmop.hpp"
#include "gmop/scene.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gmop::eval {

using scene::SceneSample;

// Minimum over joint samples of the agent- and step-averaged L2 error. Throws ShapeError on
// mismatched shapes and std::invalid_argument for an empty sample set.
double joint_min_ade(const std::vector<SceneSample>& samples, const SceneSample& truth);
// Same convention, final step only.
double joint_min_fde(const std::vector<SceneSample>& samples, const SceneSample& truth);

// Row-major flattening [agent][step][x, y].
Eigen::VectorXd flatten(const SceneSample& sample);

// Per-coordinate Gaussian kernel bandwidths: unbiased std * m^(-1/(d+4)), floored.
Eigen::VectorXd kde_bandwidths(const std::vector<Eigen::VectorXd>& points, double floor = 1e-3);
// Log-density of a product-kernel KDE at `x`, computed with log-sum-exp.
double kde_log_density(const std::vector<Eigen::VectorXd>& points, const Eigen::VectorXd& bandwidths,
                       const Eigen::VectorXd& x);
// -log of the KDE fitted to the flattened samples, at the flattened ground truth. Needs >= 2 samples.
double kde_nll(const std::vector<SceneSample>& samples, const SceneSample& truth, double floor = 1e-3);

// Draws `count` joint samples for a future-stripped scene.
using Sampler = std::function<std::vector<SceneSample>(const scene::ObservedScene&, int count)>;

// Mean over scenes of kde_nll with max_samples draws per scene.
double joint_nll_metric(const Sampler& sampler, const std::vector<scene::Scene>& scenes, int max_samples);

struct MetricsReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 0;
  std::size_t scenes = 0;
  double joint_min_ade = 0.0;
  double joint_min_fde = 0.0;
  double joint_nll = 0.0;
  std::optional<double> classifier_accuracy;
};

struct EvalConfig {
  int samples = 6;
  int max_samples = 100;
  std::uint64_t eval_seed = 0;
  double bandwidth_floor = 1e-3;
};

// Per scene one nested draw of max(samples, max_samples) joint samples: the first `samples`
// feed minADE/minFDE, all of them feed the KDE NLL. Sampling seeds derive from the evaluation
// seed and the scene id. Crossing-family variants also report classifier accuracy against the
// heuristic labels of the evaluated scenes.
MetricsReport evaluate_variant(model::GmopModel& model, const std::vector<scene::Scene>& scenes,
                               const EvalConfig& config, const scene::AgentTypeTable& types = {});

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  bool best = false;
};

struct SummaryRow {
  std::string variant;
  std::size_t runs = 0;
  MetricSummary joint_min_ade;
  MetricSummary joint_min_fde;
  MetricSummary joint_nll;
  std::optional<MetricSummary> classifier_accuracy;
};

// Rows in order of first appearance. Best marks the lowest mean distance and NLL and the highest accuracy;
// ties mark every tied row.
std::vector<SummaryRow> aggregate_runs(const std::vector<MetricsReport>& reports);

// Columns: variant,seed,eval_seed,scenes,joint_min_ade,joint_min_fde,joint_nll,classifier_accuracy
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);

// Columns: variant,runs, then <metric>_mean,<metric>_std,<metric>_best for each metric.
std::string summary_csv(const std::vector<SummaryRow>& rows);

// Static SVG strip chart of one metric per variant ("joint_min_ade", "joint_min_fde", "joint_nll").
std::string metric_plot_svg(const std::vector<MetricsReport>& reports, const std::string& metric);

}  // namespace gmop::eval
