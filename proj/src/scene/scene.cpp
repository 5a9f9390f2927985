#include "gmop/scene.hpp"

#include "gmop/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace gmop::scene {

namespace {

using nlohmann::json;

constexpr std::string_view kFormatName = "gmop-scenes";
constexpr int kFormatVersion = 1;

constexpr std::array<std::string_view, kNumAgentKinds> kKindNames = {"vehicle", "motorcycle", "bicycle",
                                                                     "pedestrian"};

bool finite(const Point& p) { return std::isfinite(p.x()) && std::isfinite(p.y()); }

json points_to_json(const std::vector<Point>& points) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back({p.x(), p.y()});
  return arr;
}

std::vector<Point> points_from_json(const json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("expected an array of [x, y] points");
  std::vector<Point> out;
  out.reserve(arr.size());
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("point must be [x, y]");
    out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  return out;
}

json scene_to_json(const Scene& s) {
  json j;
  j["scene_id"] = s.scene_id;
  j["sampling_hz"] = s.sampling_hz;
  j["n_past"] = s.n_past();
  j["n_future"] = s.n_future();
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"id", a.id},
                      {"type", kind_name(a.kind)},
                      {"past", points_to_json(a.past.positions)},
                      {"future", points_to_json(a.future.positions)}});
  }
  j["agents"] = std::move(agents);
  if (s.annotations) {
    json ann;
    ann["scenario"] = s.annotations->scenario;
    ann["priority"] = s.annotations->priority;
    json inter = json::array();
    for (const auto& i : s.annotations->interactions) {
      inter.push_back({{"from", i.influencer}, {"to", i.influencee}, {"conflict", {i.conflict.x(), i.conflict.y()}}});
    }
    ann["interactions"] = std::move(inter);
    j["annotations"] = std::move(ann);
  }
  return j;
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.sampling_hz = j.at("sampling_hz").get<double>();
  if (!(s.sampling_hz > 0.0)) throw ValidationError("sampling_hz must be positive");
  const double dt = 1.0 / s.sampling_hz;
  for (const auto& ja : j.at("agents")) {
    Agent a;
    a.id = ja.at("id").get<AgentId>();
    a.kind = parse_kind(ja.at("type").get<std::string>());
    a.past = {points_from_json(ja.at("past")), dt};
    a.future = {points_from_json(ja.at("future")), dt};
    s.agents.push_back(std::move(a));
  }
  if (j.contains("n_past") && !s.agents.empty()) {
    const auto np = j["n_past"].get<std::size_t>();
    const auto nf = j.at("n_future").get<std::size_t>();
    for (const auto& a : s.agents) {
      if (a.past.size() != np || a.future.size() != nf) {
        throw ValidationError("scene '" + s.scene_id + "': agent " + std::to_string(a.id) + " has horizons " +
                              std::to_string(a.past.size()) + "/" + std::to_string(a.future.size()) +
                              " but the scene declares " + std::to_string(np) + "/" + std::to_string(nf));
      }
    }
  }
  if (j.contains("annotations")) {
    const auto& ja = j["annotations"];
    Annotations ann;
    ann.scenario = ja.value("scenario", "");
    ann.priority = ja.value("priority", std::vector<AgentId>{});
    for (const auto& ji : ja.value("interactions", json::array())) {
      Interaction i;
      i.influencer = ji.at("from").get<AgentId>();
      i.influencee = ji.at("to").get<AgentId>();
      const auto& c = ji.at("conflict");
      i.conflict = Point(c.at(0).get<double>(), c.at(1).get<double>());
      ann.interactions.push_back(i);
    }
    s.annotations = std::move(ann);
  }
  return s;
}

}  // namespace

std::string_view kind_name(AgentKind kind) { return kKindNames[static_cast<int>(kind)]; }

AgentKind parse_kind(std::string_view name) {
  for (int k = 0; k < kNumAgentKinds; ++k) {
    if (kKindNames[k] == name) return static_cast<AgentKind>(k);
  }
  throw std::invalid_argument("unknown agent type '" + std::string(name) + "'");
}

AgentTypeTable::AgentTypeTable()
    : types_{{{AgentKind::Vehicle, 2.0, 7.0},
              {AgentKind::Motorcycle, 1.0, 7.0},
              {AgentKind::Bicycle, 0.8, 3.5},
              {AgentKind::Pedestrian, 0.5, 1.4}}} {}

void AgentTypeTable::set(AgentKind kind, double avg_width_m, double avg_speed_mps) {
  if (!(avg_width_m > 0.0) || !(avg_speed_mps > 0.0)) {
    throw ValidationError("agent width and average speed must be positive");
  }
  types_[static_cast<int>(kind)] = {kind, avg_width_m, avg_speed_mps};
}

double AgentTypeTable::max_width() const {
  double w = 0.0;
  for (const auto& t : types_) w = std::max(w, t.avg_width_m);
  return w;
}

std::optional<std::size_t> Scene::index_of(AgentId id) const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].id == id) return i;
  }
  return std::nullopt;
}

ObservedScene observe(const Scene& scene) {
  ObservedScene out;
  out.scene_id = scene.scene_id;
  out.sampling_hz = scene.sampling_hz;
  out.agents.reserve(scene.agents.size());
  for (const auto& a : scene.agents) out.agents.push_back({a.id, a.kind, a.past});
  return out;
}

SceneSample future_positions(const Scene& scene) {
  SceneSample out;
  out.reserve(scene.agents.size());
  for (const auto& a : scene.agents) out.push_back(a.future.positions);
  return out;
}

void validate(const Scene& scene) {
  const auto fail = [&](const std::string& msg) { throw ValidationError("scene '" + scene.scene_id + "': " + msg); };
  if (!(scene.sampling_hz > 0.0) || !std::isfinite(scene.sampling_hz)) fail("sampling_hz must be positive");
  if (scene.agents.empty()) fail("a scene needs at least one agent");
  const std::size_t np = scene.agents.front().past.size();
  const std::size_t nf = scene.agents.front().future.size();
  if (np < 2) fail("past trajectories need at least 2 points");
  if (nf < 1) fail("future trajectories need at least 1 point");
  std::set<AgentId> ids;
  for (const auto& a : scene.agents) {
    if (!ids.insert(a.id).second) fail("duplicate agent id " + std::to_string(a.id));
    if (a.past.size() != np || a.future.size() != nf) {
      fail("agent " + std::to_string(a.id) + " has horizons " + std::to_string(a.past.size()) + "/" +
           std::to_string(a.future.size()) + ", expected " + std::to_string(np) + "/" + std::to_string(nf));
    }
    for (const auto* traj : {&a.past, &a.future}) {
      if (std::abs(traj->dt - scene.dt()) > 1e-12) fail("agent " + std::to_string(a.id) + " has a mismatched dt");
      for (const auto& p : traj->positions) {
        if (!finite(p)) fail("agent " + std::to_string(a.id) + " has a non-finite coordinate");
      }
    }
  }
}

namespace {

// Knuth's TwoSum: a + b == s + err exactly.
double two_sum(double a, double b, double& err) {
  const double s = a + b;
  const double bb = s - a;
  err = (a - (s - bb)) + (b - bb);
  return s;
}

}  // namespace

DisplacementSeq to_displacements(const Trajectory& traj) {
  if (traj.positions.empty()) throw std::invalid_argument("to_displacements needs at least one point");
  DisplacementSeq out;
  out.origin = traj.positions.front();
  out.deltas.reserve(traj.size() - 1);
  out.residuals.reserve(traj.size() - 1);
  for (std::size_t t = 1; t < traj.size(); ++t) {
    Point d, r;
    for (int k = 0; k < 2; ++k) d[k] = two_sum(traj[t][k], -traj[t - 1][k], r[k]);
    out.deltas.push_back(d);
    out.residuals.push_back(r);
  }
  return out;
}

Trajectory from_displacements(const DisplacementSeq& seq, double dt) {
  if (!seq.residuals.empty() && seq.residuals.size() != seq.deltas.size()) {
    throw ShapeError("from_displacements: residual count differs from delta count");
  }
  Trajectory out;
  out.dt = dt;
  out.positions.reserve(seq.deltas.size() + 1);
  out.positions.push_back(seq.origin);
  for (std::size_t t = 0; t < seq.deltas.size(); ++t) {
    const Point& prev = out.positions.back();
    Point next;
    for (int k = 0; k < 2; ++k) {
      double err = 0.0;
      const double hi = two_sum(prev[k], seq.deltas[t][k], err);
      next[k] = seq.residuals.empty() ? hi : hi + (err + seq.residuals[t][k]);
    }
    out.positions.push_back(next);
  }
  return out;
}

std::vector<Scene> parse_scenes(std::string_view text) {
  std::vector<Scene> scenes;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (j.is_object() && j.contains("format")) {
      if (j["format"] != kFormatName) throw ParseError("unknown file format", line_no);
      if (j.value("version", 0) != kFormatVersion) throw ParseError("unsupported format version", line_no);
      continue;
    }
    Scene s;
    try {
      s = scene_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(std::string("malformed scene record: ") + e.what(), line_no);
    }
    try {
      validate(s);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

std::string serialize_scenes(const std::vector<Scene>& scenes) {
  std::string out = json{{"format", kFormatName}, {"version", kFormatVersion}}.dump();
  out += '\n';
  for (const auto& s : scenes) {
    validate(s);
    out += scene_to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<Scene> load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scene file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenes(buf.str());
}

void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  const std::string text = serialize_scenes(scenes);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write scene file " + path.string());
  out << text;
  if (!out) throw IoError("failed writing scene file " + path.string());
}

std::uint64_t fnv1a_64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::pair<std::vector<Scene>, std::vector<Scene>> split_dataset(const std::vector<Scene>& scenes,
                                                                double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
  }
  if (scenes.size() < 2) throw ValidationError("split_dataset needs at least 2 scenes");
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(scenes.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, scenes.size() - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  // Keep the source order inside each part.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::pair<std::vector<Scene>, std::vector<Scene>> out;
  for (auto i : train_idx) out.first.push_back(scenes[i]);
  for (auto i : val_idx) out.second.push_back(scenes[i]);
  return out;
}

}  // namespace gmop::scene
