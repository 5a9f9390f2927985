#include "gmop/eval.hpp"

#include "gmop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace gmop::eval {

MetricsReport evaluate_variant(model::GmopModel& model, const std::vector<scene::Scene>& scenes,
                               const EvalConfig& config, const scene::AgentTypeTable& types) {
  if (scenes.empty()) throw std::invalid_argument("evaluate_variant: no scenes");
  if (config.samples < 1) throw std::invalid_argument("evaluate_variant: samples must be at least 1");
  if (config.max_samples < 2) throw std::invalid_argument("evaluate_variant: max_samples must be at least 2");
  MetricsReport report;
  report.variant = std::string(graphs::strategy_name(model.strategy()));
  report.seed = model.config().seed;
  report.eval_seed = config.eval_seed;
  report.scenes = scenes.size();
  const int draws = std::max(config.samples, config.max_samples);
  for (const auto& s : scenes) {
    const std::uint64_t seed = scene::fnv1a_64(s.scene_id) ^ (config.eval_seed * 0x9e3779b97f4a7c15ULL);
    const auto samples = model.predict_scene(scene::observe(s), draws, seed);
    const auto truth = scene::future_positions(s);
    const std::vector<SceneSample> first(samples.begin(), samples.begin() + config.samples);
    const std::vector<SceneSample> pool(samples.begin(), samples.begin() + config.max_samples);
    report.joint_min_ade += joint_min_ade(first, truth);
    report.joint_min_fde += joint_min_fde(first, truth);
    report.joint_nll += kde_nll(pool, truth, config.bandwidth_floor);
  }
  const double n = static_cast<double>(scenes.size());
  report.joint_min_ade /= n;
  report.joint_min_fde /= n;
  report.joint_nll /= n;
  if (graphs::is_crossing_family(model.strategy()) && model.classifier()) {
    report.classifier_accuracy =
        model::evaluate_classifier(*model.classifier(), scenes, model.strategy(), types,
                                   model.classifier()->config().symmetric_eps)
            .accuracy;
  }
  return report;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

template <typename Get>
void mark_best(std::vector<SummaryRow>& rows, Get get, bool lower_is_better) {
  double best = 0.0;
  bool found = false;
  for (auto& r : rows) {
    if (MetricSummary* m = get(r)) {
      if (!found || (lower_is_better ? m->mean < best : m->mean > best)) best = m->mean;
      found = true;
    }
  }
  for (auto& r : rows) {
    if (MetricSummary* m = get(r)) m->best = m->mean == best;
  }
}

}  // namespace

std::vector<SummaryRow> aggregate_runs(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsReport*>> groups;
  for (const auto& r : reports) {
    if (!groups.count(r.variant)) order.push_back(r.variant);
    groups[r.variant].push_back(&r);
  }
  std::vector<SummaryRow> rows;
  for (const auto& name : order) {
    const auto& group = groups[name];
    std::vector<double> ade, fde, nll, acc;
    for (const auto* r : group) {
      ade.push_back(r->joint_min_ade);
      fde.push_back(r->joint_min_fde);
      nll.push_back(r->joint_nll);
      if (r->classifier_accuracy) acc.push_back(*r->classifier_accuracy);
    }
    SummaryRow row;
    row.variant = name;
    row.runs = group.size();
    row.joint_min_ade = summarize(ade);
    row.joint_min_fde = summarize(fde);
    row.joint_nll = summarize(nll);
    if (!acc.empty()) row.classifier_accuracy = summarize(acc);
    rows.push_back(row);
  }
  mark_best(rows, [](SummaryRow& r) { return &r.joint_min_ade; }, true);
  mark_best(rows, [](SummaryRow& r) { return &r.joint_min_fde; }, true);
  mark_best(rows, [](SummaryRow& r) { return &r.joint_nll; }, true);
  mark_best(
      rows, [](SummaryRow& r) { return r.classifier_accuracy ? &*r.classifier_accuracy : nullptr; }, false);
  return rows;
}

std::string metrics_csv_header() {
  return "variant,seed,eval_seed,scenes,joint_min_ade,joint_min_fde,joint_nll,classifier_accuracy";
}

std::string metrics_csv_row(const MetricsReport& r) {
  return fmt::format("{},{},{},{},{},{},{},{}", r.variant, r.seed, r.eval_seed, r.scenes, r.joint_min_ade,
                     r.joint_min_fde, r.joint_nll,
                     r.classifier_accuracy ? fmt::format("{}", *r.classifier_accuracy) : std::string());
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& r : reports) out << metrics_csv_row(r) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::filesystem::path& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(fmt::format("{}: bad number '{}'", path.string(), text), line);
  }
}

}  // namespace

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) {
    throw ParseError(path.string() + ": unexpected metrics header", 1);
  }
  std::vector<MetricsReport> out;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw ParseError(fmt::format("{}: expected 8 fields", path.string()), number);
    MetricsReport r;
    r.variant = f[0];
    r.seed = static_cast<std::uint64_t>(parse_double(f[1], path, number));
    r.eval_seed = static_cast<std::uint64_t>(parse_double(f[2], path, number));
    r.scenes = static_cast<std::size_t>(parse_double(f[3], path, number));
    r.joint_min_ade = parse_double(f[4], path, number);
    r.joint_min_fde = parse_double(f[5], path, number);
    r.joint_nll = parse_double(f[6], path, number);
    if (!f[7].empty()) r.classifier_accuracy = parse_double(f[7], path, number);
    out.push_back(r);
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "variant,runs,joint_min_ade_mean,joint_min_ade_std,joint_min_ade_best,joint_min_fde_mean,joint_min_fde_std,"
      "joint_min_fde_best,joint_nll_mean,joint_nll_std,joint_nll_best,classifier_accuracy_mean,"
      "classifier_accuracy_std,classifier_accuracy_best\n";
  auto cells = [](const MetricSummary& m) { return fmt::format("{},{},{}", m.mean, m.std, m.best ? 1 : 0); };
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}\n", r.variant, r.runs, cells(r.joint_min_ade), cells(r.joint_min_fde),
                       cells(r.joint_nll), r.classifier_accuracy ? cells(*r.classifier_accuracy) : ",,");
  }
  return out;
}

std::string metric_plot_svg(const std::vector<MetricsReport>& reports, const std::string& metric) {
  auto value = [&](const MetricsReport& r) {
    if (metric == "joint_min_ade") return r.joint_min_ade;
    if (metric == "joint_min_fde") return r.joint_min_fde;
    if (metric == "joint_nll") return r.joint_nll;
    throw std::invalid_argument("unknown metric '" + metric + "'");
  };
  const auto rows = aggregate_runs(reports);
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& r : reports) {
    const double v = value(r);
    lo = first ? v : std::min(lo, v);
    hi = first ? v : std::max(hi, v);
    first = false;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;
  constexpr double kLeft = 70, kTop = 30, kHeight = 260, kColumn = 110;
  const double width = kLeft + kColumn * static_cast<double>(std::max<std::size_t>(rows.size(), 1)) + 20;
  auto y_of = [&](double v) { return kTop + kHeight * (hi - v) / (hi - lo); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.0f}\" y=\"18\" font-size=\"13\">{}</text>\n"
      "<line x1=\"{:.0f}\" y1=\"{:.0f}\" x2=\"{:.0f}\" y2=\"{:.0f}\" stroke=\"black\"/>\n",
      width, kTop + kHeight + 60, kLeft, metric, kLeft, kTop, kLeft, kTop + kHeight);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    svg += fmt::format("<text x=\"{:.0f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6, y_of(v) + 4,
                       v);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = kLeft + kColumn * (static_cast<double>(i) + 0.5);
    for (const auto& r : reports) {
      if (r.variant != rows[i].variant) continue;
      svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3.5\" fill=\"#3465a4\" fill-opacity=\"0.7\"/>\n", x,
                         y_of(value(r)));
    }
    const auto& s = metric == "joint_min_ade" ? rows[i].joint_min_ade
                    : metric == "joint_min_fde" ? rows[i].joint_min_fde
                                                : rows[i].joint_nll;
    svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#cc0000\"/>\n", x - 18,
                       y_of(s.mean), x + 18, y_of(s.mean));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.0f}\" text-anchor=\"middle\"{}>{}</text>\n", x,
                       kTop + kHeight + 18, s.best ? " font-weight=\"bold\"" : "", rows[i].variant);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace gmop::eval
