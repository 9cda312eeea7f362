#include "osg/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace osg {

void MapperConfig::validate() const {
  if (!(beta_pix > 0.0)) throw std::invalid_argument("beta_pix must be positive");
  if (!(beta_iou >= 0.0 && beta_iou <= 1.0)) throw std::invalid_argument("beta_iou must lie in [0,1]");
  if (!(min_object_area >= 0.0)) throw std::invalid_argument("min_object_area must be non-negative");
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double centroid_distance(const BBox& a, const BBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

bool are_near(const Detection& a, const Detection& b, const MapperConfig& cfg) {
  const bool close = centroid_distance(a.bbox, b.bbox) <= cfg.beta_pix;
  const bool overlap = iou(a.bbox, b.bbox) >= cfg.beta_iou;
  return cfg.nearness_rule == NearnessRule::Either ? (close || overlap) : (close && overlap);
}

std::vector<std::size_t> ParsedObservation::objects() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].layer == 1) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> ParsedObservation::connectors() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].layer == 2) out.push_back(i);
  }
  return out;
}

bool ParsedObservation::is_near(std::size_t i, std::size_t j) const {
  const auto key = std::minmax(i, j);
  return std::find(near.begin(), near.end(), std::make_pair(key.first, key.second)) != near.end();
}

ParsedObservation parse_observation(const Observation& raw, const OsgSpec& spec,
                                    SemanticOracle& oracle, const MapperConfig& cfg) {
  const ClassSpec* place_cls = spec.find(raw.place_class);
  if (place_cls == nullptr || place_cls->layer_id != 3) {
    throw std::invalid_argument("observation place class '" + raw.place_class +
                                "' is not a Place class of the graph spec");
  }
  std::vector<const Detection*> kept;
  for (const auto& d : raw.detections) {
    if (d.bbox.area() >= cfg.min_object_area) kept.push_back(&d);
  }

  std::vector<SceneElement> elements;
  elements.push_back({raw.place_label + "_0", raw.place_label});
  for (std::size_t k = 0; k < kept.size(); ++k) {
    elements.push_back({kept[k]->label + "_" + std::to_string(k + 1), kept[k]->label});
  }
  std::vector<std::optional<std::string>> classes;
  try {
    classes = oracle.classify_elements(spec, raw.place_class, elements);
  } catch (const OracleError& e) {
    throw OracleError(e.kind(), std::string("classifying observation elements: ") + e.what());
  }
  if (classes.size() != elements.size()) {
    throw OracleError(OracleError::Kind::Parse, "element classification has the wrong length");
  }

  ParsedObservation parsed;
  parsed.place_class = raw.place_class;
  parsed.place_label = raw.place_label;
  parsed.place_provenance = raw.place_provenance;
  std::vector<const Detection*> leaf_detections;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& cls = classes[k + 1];
    if (!cls) continue;
    const ClassSpec* c = spec.find(*cls);
    if (c == nullptr || (c->layer_id != 1 && c->layer_id != 2)) continue;
    ParsedElement el;
    el.name = elements[k + 1].name;
    el.class_name = c->name;
    el.layer = c->layer_id;
    el.label = kept[k]->label;
    el.description = kept[k]->description;
    el.image_ref = kept[k]->image_ref;
    el.provenance = kept[k]->provenance;
    parsed.leaves.push_back(std::move(el));
    leaf_detections.push_back(kept[k]);
  }
  for (std::size_t i = 0; i < leaf_detections.size(); ++i) {
    for (std::size_t j = i + 1; j < leaf_detections.size(); ++j) {
      if (are_near(*leaf_detections[i], *leaf_detections[j], cfg)) parsed.near.emplace_back(i, j);
    }
  }
  return parsed;
}

ObjectFeatures observed_place_features(const ParsedObservation& parsed) {
  ObjectFeatures f;
  for (const auto& leaf : parsed.leaves) {
    f.entries.push_back({NodeId(leaf.name), leaf.label, leaf.description});
  }
  return f;
}

std::vector<FeatureEntry> observed_leaf_features(const ParsedObservation& parsed, std::size_t i,
                                                 const OsgSpec& spec) {
  std::vector<FeatureEntry> out;
  for (std::size_t j = 0; j < parsed.leaves.size(); ++j) {
    if (j == i || !parsed.is_near(i, j)) continue;
    if (!spec.permits(parsed.leaves[i].class_name, EdgeType::IsNear, parsed.leaves[j].class_name)) {
      continue;
    }
    const auto& leaf = parsed.leaves[j];
    out.push_back({NodeId(leaf.name), leaf.label, leaf.description});
  }
  return out;
}

std::optional<int> hop_distance(const Osg& graph, const NodeId& from, const NodeId& to) {
  if (!graph.has_node(from) || !graph.has_node(to)) return std::nullopt;
  std::vector<int> dist(graph.node_count(), -1);
  std::deque<std::size_t> queue;
  dist[graph.index_of(from)] = 0;
  queue.push_back(graph.index_of(from));
  const std::size_t target = graph.index_of(to);
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    if (cur == target) return dist[cur];
    const NodeId& id = graph.nodes()[cur].id;
    for (std::size_t e : graph.incident_edges(id)) {
      const Edge& edge = graph.edges()[e];
      if (edge.type != EdgeType::ConnectsTo) continue;
      const std::size_t next = graph.index_of(edge.source == id ? edge.target : edge.source);
      if (dist[next] < 0) {
        dist[next] = dist[cur] + 1;
        queue.push_back(next);
      }
    }
  }
  return std::nullopt;
}

std::optional<NodeId> estimate_state(const OsgSpec& spec, const Osg& graph,
                                     const AgentState& prev_state, const ParsedObservation& parsed,
                                     SemanticOracle& oracle) {
  std::vector<PlaceRef> places;
  for (const auto& n : graph.nodes()) {
    if (n.is_place()) places.push_back({n.id, n.label});
  }
  if (places.empty()) return std::nullopt;

  std::vector<NodeId> candidates;
  for (const auto& id : oracle.similar_places(spec, parsed.place_label, places)) {
    if (graph.has_node(id) && graph.node(id).is_place() &&
        std::find(candidates.begin(), candidates.end(), id) == candidates.end()) {
      candidates.push_back(id);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](const NodeId& a, const NodeId& b) {
    return graph.index_of(a) < graph.index_of(b);
  });
  if (prev_state.current_place && graph.has_node(*prev_state.current_place)) {
    std::map<std::string, long> rank;
    for (const auto& c : candidates) {
      auto d = hop_distance(graph, *prev_state.current_place, c);
      rank[c.value] = d ? *d : std::numeric_limits<long>::max();
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](const NodeId& a, const NodeId& b) {
      return rank[a.value] < rank[b.value];
    });
  }

  const ObjectFeatures observed = observed_place_features(parsed);
  for (const auto& c : candidates) {
    if (oracle.place_match(spec, parsed.place_class, observed, object_features(graph, c))) return c;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Graph update

namespace {

NodeAttributes attributes_of(const ParsedElement& el) {
  return {el.description, el.image_ref, el.provenance};
}

void link_both_ways(const OsgSpec& spec, Osg& graph, const NodeId& a, EdgeType type,
                    const NodeId& b) {
  if (a == b) return;
  const std::string& ca = graph.node(a).class_name;
  const std::string& cb = graph.node(b).class_name;
  if (spec.permits(ca, type, cb)) graph.add_edge(a, type, b);
  if (spec.permits(cb, type, ca)) graph.add_edge(b, type, a);
}

void attach_leaf(const OsgSpec& spec, Osg& graph, const NodeId& place, const NodeId& leaf) {
  const std::string& pc = graph.node(place).class_name;
  const std::string& lc = graph.node(leaf).class_name;
  if (spec.permits(pc, EdgeType::Contains, lc)) {
    auto parent = graph.contains_parent(leaf);
    if (!parent) graph.add_edge(place, EdgeType::Contains, leaf);
  }
  link_both_ways(spec, graph, place, EdgeType::ConnectsTo, leaf);
}

void add_near_edges(const OsgSpec& spec, Osg& graph, const ParsedObservation& parsed,
                    const std::vector<NodeId>& ids) {
  for (const auto& [i, j] : parsed.near) link_both_ways(spec, graph, ids[i], EdgeType::IsNear, ids[j]);
}

std::optional<NodeId> ancestor_at_layer(const Osg& graph, std::optional<NodeId> node, int layer) {
  while (node && graph.has_node(*node)) {
    if (graph.node(*node).layer == layer) return node;
    if (graph.node(*node).layer > layer) return std::nullopt;
    node = graph.contains_parent(*node);
  }
  return std::nullopt;
}

/// Features of a stored leaf as seen from `place`: only neighbours that are
/// themselves leaves of that place.
std::vector<FeatureEntry> features_within(const Osg& graph, const NodeId& leaf,
                                          const std::set<std::string>& place_leaf_ids) {
  std::vector<FeatureEntry> out;
  for (const auto& e : object_features(graph, leaf).entries) {
    if (place_leaf_ids.count(e.node.value) != 0) out.push_back(e);
  }
  return out;
}

/// Index of the observed connector that is the connector just traversed.
std::optional<std::size_t> traversal_match(const OsgSpec& spec, const Osg& graph,
                                           const ParsedObservation& parsed,
                                           const std::optional<NodeId>& last_subgoal,
                                           SemanticOracle& oracle) {
  if (!last_subgoal || !graph.has_node(*last_subgoal)) return std::nullopt;
  const Node& traversed = graph.node(*last_subgoal);
  if (traversed.layer != 2) return std::nullopt;
  std::vector<LeafView> candidates;
  std::map<std::string, std::size_t> index;
  for (std::size_t i : parsed.connectors()) {
    candidates.push_back({NodeId(parsed.leaves[i].name), parsed.leaves[i].label,
                          parsed.leaves[i].description, {}});
    index[parsed.leaves[i].name] = i;
  }
  if (candidates.empty()) return std::nullopt;
  const LeafView query{traversed.id, traversed.label, traversed.description, {}};
  auto hit = oracle.associate_object(spec, query, candidates);
  if (!hit) return std::nullopt;
  auto it = index.find(hit->value);
  if (it == index.end()) return std::nullopt;
  if (parsed.leaves[it->second].class_name != traversed.class_name) return std::nullopt;
  return it->second;
}

void propagate_abstractions(const OsgSpec& spec, Osg& graph, const NodeId& place,
                            const AgentState& prev_state, const ParsedObservation& parsed,
                            const std::optional<NodeId>& last_subgoal, SemanticOracle& oracle) {
  NodeId child = place;
  for (int layer : spec.declared_layers()) {
    if (layer < 4) continue;
    const ClassSpec* cls = nullptr;
    for (const auto* c : spec.classes_at_layer(layer)) {
      if (spec.permits(c->name, EdgeType::Contains, graph.node(child).class_name)) {
        cls = c;
        break;
      }
    }
    if (cls == nullptr) break;
    if (graph.contains_parent(child)) break;

    const auto prev_parent = ancestor_at_layer(graph, prev_state.current_place, layer);
    std::optional<NodeId> traversed;
    if (last_subgoal && graph.has_node(*last_subgoal)) {
      const ClassSpec* sub = spec.find(graph.node(*last_subgoal).class_name);
      if (sub != nullptr && sub->layer_id == 2 &&
          std::find(sub->connects_to.begin(), sub->connects_to.end(), cls->name) !=
              sub->connects_to.end()) {
        traversed = last_subgoal;
      }
    }

    std::vector<PlaceRef> existing;
    for (const auto& n : graph.nodes()) {
      if (n.class_name == cls->name) existing.push_back({n.id, n.label});
    }

    std::optional<NodeId> parent;
    std::string new_label = cls->name;
    bool decided = false;
    if (spec.is_geometry_defined(cls->name)) {
      if (traversed) {
        // The far side may already be known from an earlier crossing.
        for (const auto& r : connected_regions(graph, *traversed)) {
          if (graph.node(r).class_name == cls->name && (!prev_parent || r != *prev_parent)) {
            parent = r;
            break;
          }
        }
        decided = true;
      } else if (prev_parent) {
        parent = prev_parent;
        decided = true;
      } else if (existing.empty()) {
        decided = true;
      }
    }
    if (!decided) {
      AbstractionQuery q;
      q.abstraction_class = cls->name;
      q.place_class = parsed.place_class;
      q.place_label = parsed.place_label;
      if (prev_parent) q.previous_parent = PlaceRef{*prev_parent, graph.node(*prev_parent).label};
      if (prev_state.current_place && graph.has_node(*prev_state.current_place)) {
        q.previous_place_label = graph.node(*prev_state.current_place).label;
      }
      if (last_subgoal && graph.has_node(*last_subgoal)) {
        q.subgoal_label = graph.node(*last_subgoal).label;
      }
      q.existing = existing;
      const AbstractionAnswer answer = oracle.infer_abstract_region(spec, q);
      if (answer.existing && graph.has_node(*answer.existing) &&
          graph.node(*answer.existing).class_name == cls->name) {
        parent = answer.existing;
      } else if (!answer.new_label.empty()) {
        new_label = answer.new_label;
      }
    }

    if (parent) {
      graph.add_edge(*parent, EdgeType::Contains, child);
      break;
    }
    const NodeId created = graph.add_node(cls->name, new_label);
    graph.add_edge(created, EdgeType::Contains, child);
    if (traversed) {
      link_both_ways(spec, graph, created, EdgeType::ConnectsTo, *traversed);
      if (prev_parent) link_both_ways(spec, graph, *prev_parent, EdgeType::ConnectsTo, *traversed);
    } else if (prev_parent) {
      link_both_ways(spec, graph, created, EdgeType::ConnectsTo, *prev_parent);
    }
    child = created;
  }
}

/// The agent went through `last_subgoal` but the arrival view missed it: the
/// crossing itself still places the connector on this side.
void link_unseen_crossing(const OsgSpec& spec, Osg& graph, const NodeId& place,
                          const std::optional<std::size_t>& crossed,
                          const std::optional<NodeId>& last_subgoal) {
  if (crossed || !last_subgoal || !graph.has_node(*last_subgoal)) return;
  if (graph.node(*last_subgoal).layer != 2) return;
  link_both_ways(spec, graph, place, EdgeType::ConnectsTo, *last_subgoal);
}

}  // namespace

AgentState update_graph(const OsgSpec& spec, Osg& graph, const std::optional<NodeId>& est_state,
                        const AgentState& prev_state, const ParsedObservation& parsed,
                        SemanticOracle& oracle, const std::optional<NodeId>& last_subgoal) {
  const auto crossed = traversal_match(spec, graph, parsed, last_subgoal, oracle);
  std::vector<NodeId> ids(parsed.leaves.size());
  std::vector<bool> assigned(parsed.leaves.size(), false);
  if (crossed) {
    ids[*crossed] = *last_subgoal;
    assigned[*crossed] = true;
    graph.merge_observation(*last_subgoal, attributes_of(parsed.leaves[*crossed]));
  }

  if (!est_state) {
    const NodeId place =
        graph.add_node(parsed.place_class, parsed.place_label, {"", std::nullopt, parsed.place_provenance});
    for (std::size_t i = 0; i < parsed.leaves.size(); ++i) {
      if (!assigned[i]) {
        ids[i] = graph.add_node(parsed.leaves[i].class_name, parsed.leaves[i].label,
                                attributes_of(parsed.leaves[i]));
      }
      attach_leaf(spec, graph, place, ids[i]);
    }
    add_near_edges(spec, graph, parsed, ids);
    link_unseen_crossing(spec, graph, place, crossed, last_subgoal);
    propagate_abstractions(spec, graph, place, prev_state, parsed, last_subgoal, oracle);
    return AgentState{place};
  }

  const NodeId place = *est_state;
  graph.merge_observation(place, {"", std::nullopt, parsed.place_provenance});
  const std::vector<NodeId> stored_leaves = place_leaves(graph, place);
  std::set<std::string> stored_ids;
  for (const auto& id : stored_leaves) stored_ids.insert(id.value);
  std::vector<LeafView> pool;
  for (const auto& id : stored_leaves) {
    if (crossed && id == *last_subgoal) continue;
    const Node& n = graph.node(id);
    pool.push_back({id, n.label, n.description, features_within(graph, id, stored_ids)});
  }

  for (std::size_t i = 0; i < parsed.leaves.size(); ++i) {
    if (assigned[i]) continue;
    const ParsedElement& el = parsed.leaves[i];
    std::vector<LeafView> same_class;
    for (const auto& c : pool) {
      if (graph.node(c.id).class_name == el.class_name) same_class.push_back(c);
    }
    std::optional<NodeId> match;
    if (!same_class.empty()) {
      const LeafView query{NodeId(), el.label, el.description, observed_leaf_features(parsed, i, spec)};
      match = oracle.associate_object(spec, query, same_class);
    }
    if (match && graph.has_node(*match)) {
      ids[i] = *match;
      graph.merge_observation(*match, attributes_of(el));
      pool.erase(std::remove_if(pool.begin(), pool.end(),
                                [&](const LeafView& v) { return v.id == *match; }),
                 pool.end());
    } else {
      ids[i] = graph.add_node(el.class_name, el.label, attributes_of(el));
    }
    assigned[i] = true;
  }
  for (const auto& id : ids) attach_leaf(spec, graph, place, id);
  add_near_edges(spec, graph, parsed, ids);
  link_unseen_crossing(spec, graph, place, crossed, last_subgoal);
  return AgentState{place};
}

MapStepResult map_step(const OsgSpec& spec, Osg& graph, const AgentState& prev_state,
                       const Observation& raw, SemanticOracle& oracle, const MapperConfig& cfg,
                       const std::optional<NodeId>& last_subgoal) {
  MapStepResult result;
  result.parsed = parse_observation(raw, spec, oracle, cfg);
  const auto est = estimate_state(spec, graph, prev_state, result.parsed, oracle);
  result.new_place = !est.has_value();
  result.state = update_graph(spec, graph, est, prev_state, result.parsed, oracle, last_subgoal);
  return result;
}

}  // namespace osg
