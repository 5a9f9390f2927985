#include "gmop/graphs.hpp"

#include "gmop/error.hpp"
#include "gmop/geom.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace gmop::graphs {

InteractionLabel InteractionLabel::hard(InteractionClass c) {
  InteractionLabel l;
  l.cls = c;
  l.probs = {0.0, 0.0, 0.0};
  l.probs[static_cast<std::size_t>(c)] = 1.0;
  return l;
}

InteractionClass flip(InteractionClass c) {
  switch (c) {
    case InteractionClass::MInfluencesN: return InteractionClass::NInfluencesM;
    case InteractionClass::NInfluencesM: return InteractionClass::MInfluencesN;
    case InteractionClass::NoInteraction: break;
  }
  return InteractionClass::NoInteraction;
}

InteractionLabel flip(const InteractionLabel& label) {
  InteractionLabel out = label;
  out.cls = flip(label.cls);
  std::swap(out.probs[1], out.probs[2]);
  return out;
}

InteractionGraph::InteractionGraph(std::vector<AgentId> nodes) : nodes_(std::move(nodes)) {
  auto sorted = nodes_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("InteractionGraph: duplicate node id");
  }
}

std::size_t InteractionGraph::index_of(AgentId node) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i] == node) return i;
  }
  throw std::invalid_argument("InteractionGraph: unknown node " + std::to_string(node));
}

void InteractionGraph::add_edge(AgentId src, AgentId dst, double weight) {
  if (src == dst) throw std::invalid_argument("InteractionGraph: self-loop on " + std::to_string(src));
  (void)index_of(src);
  (void)index_of(dst);
  if (has_edge(src, dst)) {
    throw std::invalid_argument("InteractionGraph: duplicate edge " + std::to_string(src) + "->" + std::to_string(dst));
  }
  edges_.push_back({src, dst, weight});
  refresh_dag_flag();
}

bool InteractionGraph::has_edge(AgentId src, AgentId dst) const { return weight(src, dst).has_value(); }

std::optional<double> InteractionGraph::weight(AgentId src, AgentId dst) const {
  for (const auto& e : edges_) {
    if (e.src == src && e.dst == dst) return e.weight;
  }
  return std::nullopt;
}

void InteractionGraph::remove_edge(AgentId src, AgentId dst) {
  const auto it =
      std::find_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.src == src && e.dst == dst; });
  if (it != edges_.end()) edges_.erase(it);
  refresh_dag_flag();
}

std::vector<AgentId> InteractionGraph::parents(AgentId node) const {
  std::vector<AgentId> out;
  for (const auto& e : edges_) {
    if (e.dst == node) out.push_back(e.src);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void InteractionGraph::refresh_dag_flag() { is_dag_ = !has_cycle(*this); }

namespace {

std::vector<std::vector<std::size_t>> adjacency(const InteractionGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.nodes().size());
  for (const auto& e : g.edges()) adj[g.index_of(e.src)].push_back(g.index_of(e.dst));
  return adj;
}

// Tarjan's strongly connected components; returns the component index of each node.
std::vector<int> strongly_connected(const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0, n_comp = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : adj[v]) {
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = n_comp;
      } while (w != v);
      ++n_comp;
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (index[v] < 0) visit(v);
  }
  return comp;
}

}  // namespace

bool has_cycle(const InteractionGraph& graph) {
  const auto adj = adjacency(graph);
  const auto comp = strongly_connected(adj);
  for (std::size_t v = 0; v < adj.size(); ++v) {
    for (auto w : adj[v]) {
      if (comp[v] == comp[w]) return true;
    }
  }
  return false;
}

InteractionGraph dagify(const InteractionGraph& graph, std::vector<Edge>* removed) {
  InteractionGraph out = graph;
  while (true) {
    const auto comp = strongly_connected(adjacency(out));
    const Edge* victim = nullptr;
    for (const auto& e : out.edges()) {
      if (comp[out.index_of(e.src)] != comp[out.index_of(e.dst)]) continue;
      if (!victim || std::tie(e.weight, e.src, e.dst) < std::tie(victim->weight, victim->src, victim->dst)) {
        victim = &e;
      }
    }
    if (!victim) break;
    const Edge e = *victim;
    if (removed) removed->push_back(e);
    out.remove_edge(e.src, e.dst);
  }
  return out;
}

std::vector<AgentId> topological_order(const InteractionGraph& graph) {
  const auto& nodes = graph.nodes();
  std::vector<std::size_t> in_degree(nodes.size(), 0);
  const auto adj = adjacency(graph);
  for (const auto& targets : adj) {
    for (auto t : targets) ++in_degree[t];
  }
  using Item = std::pair<AgentId, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (in_degree[i] == 0) ready.emplace(nodes[i], i);
  }
  std::vector<AgentId> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    const auto [id, i] = ready.top();
    ready.pop();
    order.push_back(id);
    for (auto t : adj[i]) {
      if (--in_degree[t] == 0) ready.emplace(nodes[t], t);
    }
  }
  if (order.size() != nodes.size()) throw ContractError("topological_order: graph has a directed cycle");
  return order;
}

namespace {
std::vector<AgentId> node_ids(const scene::ObservedScene& scene) {
  std::vector<AgentId> ids;
  for (const auto& a : scene.agents) ids.push_back(a.id);
  return ids;
}
}  // namespace

InteractionGraph independence_graph(const scene::ObservedScene& scene) { return InteractionGraph(node_ids(scene)); }

InteractionGraph euclidean_graph(const scene::ObservedScene& scene, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("euclidean_graph: eps must be positive");
  InteractionGraph g(node_ids(scene));
  const auto& agents = scene.agents;
  std::vector<geom::Heading> headings;
  for (const auto& a : agents) headings.push_back(geom::heading(a.past));
  // Angle at which agent i sees agent j; a stationary observer pays the least attention.
  auto seen = [&](std::size_t i, std::size_t j) {
    if (headings[i].stationary) return std::numbers::pi;
    return geom::viewing_angle(agents[i].past.back(), headings[i].angle, agents[j].past.back());
  };
  for (std::size_t m = 0; m < agents.size(); ++m) {
    for (std::size_t n = m + 1; n < agents.size(); ++n) {
      const double d = (agents[m].past.back() - agents[n].past.back()).norm();
      if (!(d < eps)) continue;
      const double w = (eps - d) / eps;
      const bool m_still = headings[m].stationary;
      const bool n_still = headings[n].stationary;
      if (m_still && n_still) continue;
      // Stationary agents only receive edges.
      if (m_still) {
        g.add_edge(agents[n].id, agents[m].id, w);
        continue;
      }
      if (n_still) {
        g.add_edge(agents[m].id, agents[n].id, w);
        continue;
      }
      if (d <= geom::kStationaryEps) {
        // Coincident agents: no bearing exists, fall back to the id rule.
        g.add_edge(std::min(agents[m].id, agents[n].id), std::max(agents[m].id, agents[n].id), w);
        continue;
      }
      const double phi_mn = seen(m, n);
      const double phi_nm = seen(n, m);
      // n is influenced by m when n looks at m more directly than m looks at n.
      if (phi_nm < phi_mn) {
        g.add_edge(agents[m].id, agents[n].id, w);
      } else if (phi_mn < phi_nm) {
        g.add_edge(agents[n].id, agents[m].id, w);
      } else {
        g.add_edge(std::min(agents[m].id, agents[n].id), std::max(agents[m].id, agents[n].id), w);
      }
    }
  }
  return dagify(g);
}

namespace {

constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

std::size_t first_arrival(const scene::Trajectory& traj, const scene::Point& p, double eps) {
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if ((traj[t] - p).norm() <= eps) return t;
  }
  return kNever;
}

InteractionClass order_class(std::size_t t_m, std::size_t t_n) {
  if (t_m < t_n) return InteractionClass::MInfluencesN;
  if (t_m > t_n) return InteractionClass::NInfluencesM;
  return InteractionClass::NoInteraction;
}

}  // namespace

std::vector<PairLabel> crossing_labels(const scene::Scene& scene, const scene::AgentTypeTable& types,
                                       const CrossingOptions& options) {
  const auto& agents = scene.agents;
  std::vector<scene::Trajectory> hypothetical;
  if (options.use_hypothetical) {
    for (const auto& a : agents) {
      hypothetical.push_back(geom::extrapolate_hypothetical(a.past, a.future, types[a.kind]).trajectory);
    }
  }
  std::vector<PairLabel> out;
  for (std::size_t m = 0; m < agents.size(); ++m) {
    for (std::size_t n = m + 1; n < agents.size(); ++n) {
      const double w_m = types[agents[m].kind].avg_width_m;
      const double eps = options.symmetric_eps ? 0.5 * (w_m + types[agents[n].kind].avg_width_m) : w_m;
      InteractionClass cls = InteractionClass::NoInteraction;
      if (!options.use_hypothetical) {
        const auto d = geom::pairwise_distance_matrix(agents[m].future, agents[n].future);
        if (const auto cell = geom::first_crossing(d, eps)) {
          cls = order_class(static_cast<std::size_t>(cell->t_m), static_cast<std::size_t>(cell->t_n));
        }
      } else {
        const auto d = geom::pairwise_distance_matrix(hypothetical[m], hypothetical[n]);
        if (const auto cell = geom::first_crossing(d, eps)) {
          // The extrapolation only says the paths would have met; who got there first comes from reality.
          const scene::Point point = 0.5 * (hypothetical[m][static_cast<std::size_t>(cell->t_m)] +
                                            hypothetical[n][static_cast<std::size_t>(cell->t_n)]);
          const std::size_t t_m = first_arrival(agents[m].future, point, eps);
          const std::size_t t_n = first_arrival(agents[n].future, point, eps);
          if (t_m != kNever || t_n != kNever) cls = order_class(t_m, t_n);
        }
      }
      if (options.flipped) cls = flip(cls);
      out.push_back({m, n, InteractionLabel::hard(cls)});
    }
  }
  return out;
}

InteractionGraph graph_from_labels(const std::vector<AgentId>& nodes, const std::vector<PairLabel>& labels) {
  InteractionGraph g(nodes);
  for (const auto& pl : labels) {
    switch (pl.label.cls) {
      case InteractionClass::MInfluencesN: g.add_edge(nodes[pl.m], nodes[pl.n], pl.label.probs[1]); break;
      case InteractionClass::NInfluencesM: g.add_edge(nodes[pl.n], nodes[pl.m], pl.label.probs[2]); break;
      case InteractionClass::NoInteraction: break;
    }
  }
  return dagify(g);
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Independence: return "independence";
    case Strategy::NoHeuristic: return "no-heuristic";
    case Strategy::Euclidean: return "euclidean";
    case Strategy::Crossing: return "crossing";
    case Strategy::HypotheticalCrossing: return "hypothetical-crossing";
    case Strategy::FlippedCrossing: return "flipped-crossing";
    case Strategy::FlippedHypotheticalCrossing: return "flipped-hypothetical-crossing";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies) {
    if (strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

bool is_crossing_family(Strategy s) {
  return s == Strategy::Crossing || s == Strategy::HypotheticalCrossing || s == Strategy::FlippedCrossing ||
         s == Strategy::FlippedHypotheticalCrossing;
}

bool uses_classifier(Strategy s) { return s == Strategy::NoHeuristic || is_crossing_family(s); }

CrossingOptions crossing_options(Strategy s) {
  CrossingOptions o;
  o.use_hypothetical = s == Strategy::HypotheticalCrossing || s == Strategy::FlippedHypotheticalCrossing;
  o.flipped = s == Strategy::FlippedCrossing || s == Strategy::FlippedHypotheticalCrossing;
  return o;
}

std::string graph_to_json(const InteractionGraph& graph, std::string_view strategy, std::string_view scene_id) {
  nlohmann::json j;
  j["strategy"] = strategy;
  j["scene_id"] = scene_id;
  j["nodes"] = graph.nodes();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges()) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"weight", e.weight}});
  j["edges"] = std::move(edges);
  return j.dump();
}

InteractionGraph graph_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  InteractionGraph g(j.at("nodes").get<std::vector<AgentId>>());
  for (const auto& e : j.at("edges")) {
    g.add_edge(e.at("src").get<AgentId>(), e.at("dst").get<AgentId>(), e.at("weight").get<double>());
  }
  return g;
}

}  // namespace gmop::graphs
