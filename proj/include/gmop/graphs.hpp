#pragma once

#include "gmop/scene.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gmop::graphs {

using scene::AgentId;

enum class InteractionClass { NoInteraction = 0, MInfluencesN = 1, NInfluencesM = 2 };
inline constexpr int kNumClasses = 3;

struct InteractionLabel {
  InteractionClass cls = InteractionClass::NoInteraction;
  std::array<double, kNumClasses> probs{1.0, 0.0, 0.0};

  static InteractionLabel hard(InteractionClass c);
};

// Swaps the two influence classes; NoInteraction stays fixed.
InteractionLabel flip(const InteractionLabel& label);
InteractionClass flip(InteractionClass c);

// Label for the unordered pair (m, n) with m < n, both scene indices.
struct PairLabel {
  std::size_t m = 0;
  std::size_t n = 0;
  InteractionLabel label;
};

struct Edge {
  AgentId src = 0;
  AgentId dst = 0;
  double weight = 1.0;
};

class InteractionGraph {
 public:
  InteractionGraph() = default;
  explicit InteractionGraph(std::vector<AgentId> nodes);

  const std::vector<AgentId>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool is_dag() const { return is_dag_; }

  // Throws std::invalid_argument for self-loops, unknown nodes or a duplicate ordered pair.
  void add_edge(AgentId src, AgentId dst, double weight);
  bool has_edge(AgentId src, AgentId dst) const;
  std::optional<double> weight(AgentId src, AgentId dst) const;
  void remove_edge(AgentId src, AgentId dst);

  // Parents of `node` in ascending id order.
  std::vector<AgentId> parents(AgentId node) const;
  std::size_t index_of(AgentId node) const;

  // Recomputes the DAG flag from the edge set.
  void refresh_dag_flag();

 private:
  std::vector<AgentId> nodes_;
  std::vector<Edge> edges_;
  bool is_dag_ = true;
};

bool has_cycle(const InteractionGraph& graph);

// Repeatedly deletes the minimum-weight edge lying on a cycle, ties broken by (src, dst).
// Removed edges are appended to `removed` in deletion order when given.
InteractionGraph dagify(const InteractionGraph& graph, std::vector<Edge>* removed = nullptr);

// Kahn's algorithm, picking the smallest ready id. Throws ContractError on cyclic input.
std::vector<AgentId> topological_order(const InteractionGraph& graph);

InteractionGraph independence_graph(const scene::ObservedScene& scene);

// Last-observed-position proximity with viewing-angle orientation.
InteractionGraph euclidean_graph(const scene::ObservedScene& scene, double eps);

struct CrossingOptions {
  bool use_hypothetical = false;
  bool flipped = false;
  // Use the mean of both widths as the threshold instead of agent m's width.
  bool symmetric_eps = false;
};

std::vector<PairLabel> crossing_labels(const scene::Scene& scene, const scene::AgentTypeTable& types,
                                       const CrossingOptions& options);

// Builds the graph implied by pair labels: an edge in the winning direction weighted by its probability.
InteractionGraph graph_from_labels(const std::vector<AgentId>& nodes, const std::vector<PairLabel>& labels);

enum class Strategy {
  Independence,
  NoHeuristic,
  Euclidean,
  Crossing,
  HypotheticalCrossing,
  FlippedCrossing,
  FlippedHypotheticalCrossing
};

inline constexpr std::array<Strategy, 7> kAllStrategies = {
    Strategy::Independence,       Strategy::NoHeuristic,     Strategy::Euclidean,
    Strategy::Crossing,           Strategy::HypotheticalCrossing, Strategy::FlippedCrossing,
    Strategy::FlippedHypotheticalCrossing};

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
bool uses_classifier(Strategy s);
// Crossing-family strategies whose classifier is pretrained on heuristic labels.
bool is_crossing_family(Strategy s);
CrossingOptions crossing_options(Strategy s);

// JSON object {strategy, scene_id, nodes, edges:[{src,dst,weight}]}, one line.
std::string graph_to_json(const InteractionGraph& graph, std::string_view strategy, std::string_view scene_id);
InteractionGraph graph_from_json(std::string_view text);

}  // namespace gmop::graphs
