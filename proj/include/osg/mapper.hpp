#pragma once

// Incremental OSG construction from parsed observations: element
// classification and nearness, place recognition, and graph updates including
// region-abstraction propagation.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "osg/graph.hpp"
#include "osg/oracle.hpp"
#include "osg/schema.hpp"

namespace osg {

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
};

struct Detection {
  std::string label;
  std::string description;
  BBox bbox;
  std::optional<std::string> kind_hint;
  std::optional<std::string> image_ref;
  Provenance provenance;  // simulator ground truth; empty in live use
};

struct Observation {
  std::string place_class;
  std::string place_label;
  std::vector<Detection> detections;
  int frame_width = 640;
  int frame_height = 480;
  Provenance place_provenance;
};

enum class NearnessRule { Either, Both };

struct MapperConfig {
  double beta_pix = 100.0;
  double beta_iou = 0.1;
  double min_object_area = 200.0;
  NearnessRule nearness_rule = NearnessRule::Either;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

double iou(const BBox& a, const BBox& b);
double centroid_distance(const BBox& a, const BBox& b);
bool are_near(const Detection& a, const Detection& b, const MapperConfig& cfg);

struct ParsedElement {
  std::string name;  // "<label>_<k>" as shown to the oracle
  std::string class_name;
  int layer = 1;
  std::string label;
  std::string description;
  std::optional<std::string> image_ref;
  Provenance provenance;
};

struct ParsedObservation {
  std::string place_class;
  std::string place_label;
  Provenance place_provenance;
  /// Objects and Connectors in detection order.
  std::vector<ParsedElement> leaves;
  /// Index pairs (i < j) of leaves judged near each other.
  std::vector<std::pair<std::size_t, std::size_t>> near;

  std::vector<std::size_t> objects() const;
  std::vector<std::size_t> connectors() const;
  bool is_near(std::size_t i, std::size_t j) const;
};

ParsedObservation parse_observation(const Observation& raw, const OsgSpec& spec,
                                    SemanticOracle& oracle, const MapperConfig& cfg = {});

/// Features of the observed place: every parsed leaf, in order.
ObjectFeatures observed_place_features(const ParsedObservation& parsed);
/// Observed is-near neighbours of leaf i that the OsgSpec lets it point to.
std::vector<FeatureEntry> observed_leaf_features(const ParsedObservation& parsed, std::size_t i,
                                                 const OsgSpec& spec);

/// Hop distance over connects-to edges treated as undirected; nullopt when
/// unreachable.
std::optional<int> hop_distance(const Osg& graph, const NodeId& from, const NodeId& to);

std::optional<NodeId> estimate_state(const OsgSpec& spec, const Osg& graph,
                                     const AgentState& prev_state, const ParsedObservation& parsed,
                                     SemanticOracle& oracle);

/// Applies one parsed observation. `last_subgoal` is the node the agent just
/// reached, if any; crossing a Connector drives traversal association and
/// geometry-defined abstractions.
AgentState update_graph(const OsgSpec& spec, Osg& graph, const std::optional<NodeId>& est_state,
                        const AgentState& prev_state, const ParsedObservation& parsed,
                        SemanticOracle& oracle,
                        const std::optional<NodeId>& last_subgoal = std::nullopt);

struct MapStepResult {
  AgentState state;
  ParsedObservation parsed;
  bool new_place = false;
};

MapStepResult map_step(const OsgSpec& spec, Osg& graph, const AgentState& prev_state,
                       const Observation& raw, SemanticOracle& oracle, const MapperConfig& cfg = {},
                       const std::optional<NodeId>& last_subgoal = std::nullopt);

}  // namespace osg
