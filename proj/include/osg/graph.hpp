#pragma once

// The Open Scene Graph: a layered, heterogeneous, simple directed graph.
//
// Nodes are Objects (layer 1), Connectors (2), Places (3) and Region
// Abstractions (>= 4). Edges are typed is-near / connects-to / contains and
// must be permitted by the graph's OsgSpec. Node and edge containers keep
// insertion order, which every query and serializer preserves.

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "osg/schema.hpp"

namespace osg {

/// Textual node identifier of the form "<label>_<counter>".
struct NodeId {
  std::string value;

  NodeId() = default;
  explicit NodeId(std::string v) : value(std::move(v)) {}

  bool empty() const { return value.empty(); }
  auto operator<=>(const NodeId&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const NodeId& id) { return os << id.value; }

/// Ground-truth ids observed for a node, with observation counts. Empty for
/// graphs built outside the simulator.
using Provenance = std::map<std::string, int>;

struct Node {
  NodeId id;
  std::string class_name;
  int layer = 0;
  std::string label;
  std::string description;
  std::optional<std::string> image_ref;
  Provenance provenance;

  bool is_leaf() const { return layer == 1 || layer == 2; }
  bool is_place() const { return layer == 3; }
  bool is_abstraction() const { return layer >= 4; }
};

struct Edge {
  NodeId source;
  EdgeType type;
  NodeId target;

  bool operator==(const Edge&) const = default;
};

struct NodeAttributes {
  std::string description;
  std::optional<std::string> image_ref;
  Provenance provenance;
};

struct FeatureEntry {
  NodeId node;
  std::string label;
  std::string description;
};

/// Aggregated (label, description) list of the leaves around a node.
struct ObjectFeatures {
  NodeId owner;
  std::vector<FeatureEntry> entries;
};

/// The agent's Place, or none when it could not be localised.
struct AgentState {
  std::optional<NodeId> current_place;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Osg {
 public:
  /// Strict graphs reject undeclared classes and illegal edges on insertion.
  /// Lenient graphs accept anything; use validate_graph_against_spec on them.
  enum class Checking { Strict, Lenient };

  explicit Osg(std::shared_ptr<const OsgSpec> spec, Checking checking = Checking::Strict);

  const OsgSpec& spec() const { return *spec_; }
  const std::shared_ptr<const OsgSpec>& spec_ptr() const { return spec_; }
  Checking checking() const { return checking_; }

  NodeId add_node(std::string_view class_name, std::string_view label, NodeAttributes attrs = {});
  /// Idempotent: re-inserting an existing edge is a no-op.
  void add_edge(const NodeId& source, EdgeType type, const NodeId& target);

  /// Folds a new observation of an existing node into its attributes.
  void merge_observation(const NodeId& id, const NodeAttributes& attrs);

  bool has_node(const NodeId& id) const { return index_.count(id.value) != 0; }
  bool has_edge(const NodeId& source, EdgeType type, const NodeId& target) const;
  const Node& node(const NodeId& id) const;
  std::size_t index_of(const NodeId& id) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  /// Targets of outgoing edges of `type`, in edge insertion order.
  std::vector<NodeId> out_neighbors(const NodeId& id, EdgeType type) const;
  /// Sources of incoming edges of `type`, in edge insertion order.
  std::vector<NodeId> in_neighbors(const NodeId& id, EdgeType type) const;
  /// Indices into edges() touching `id`, ascending.
  std::vector<std::size_t> incident_edges(const NodeId& id) const;

  std::optional<NodeId> contains_parent(const NodeId& id) const;

  /// Inserts a fully formed node, as read from a graph file.
  void insert_node(Node node);

 private:
  void check_edge(const Node& src, EdgeType type, const Node& dst) const;

  std::shared_ptr<const OsgSpec> spec_;
  Checking checking_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::set<std::tuple<std::string, int, std::string>> edge_set_;
  std::vector<std::vector<std::size_t>> out_edges_;
  std::vector<std::vector<std::size_t>> in_edges_;
  std::map<std::string, int> counters_;
};

std::vector<NodeId> nodes_of_layer(const Osg& graph, int layer);

/// contains-targets of a region node.
std::vector<NodeId> children(const Osg& graph, const NodeId& region);

/// Leaves of a Place: contained Objects plus Connectors linked by connects-to.
std::vector<NodeId> place_leaves(const Osg& graph, const NodeId& place);

/// Neighbouring-leaf features of a leaf or a Place. Throws GraphError for
/// Region Abstractions.
ObjectFeatures object_features(const Osg& graph, const NodeId& node);

/// Regions linked to a node by connects-to in either direction.
std::vector<NodeId> connected_regions(const Osg& graph, const NodeId& node);

std::vector<Diagnostic> validate_graph_against_spec(const Osg& graph, const OsgSpec& spec);

/// JSON graph file: "nodes", "edges" and the nested "layout" prompt payload.
std::string serialize_graph(const Osg& graph);
Osg deserialize_graph(std::string_view text, std::shared_ptr<const OsgSpec> spec,
                      Osg::Checking checking = Osg::Checking::Strict);

/// Nested class -> node -> relations rendering used as the graph payload in
/// reasoning prompts, e.g. {"room": {"kitchen_1": {"connects to": ["door_1"]}}}.
std::string render_layout(const Osg& graph);

/// Graphviz rendering: layers as ranks, edge types as styles.
std::string render_dot(const Osg& graph);

}  // namespace osg

template <>
struct std::hash<osg::NodeId> {
  std::size_t operator()(const osg::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
