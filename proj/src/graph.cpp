#include "osg/graph.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "detail/compact_json.hpp"
#include "json.hpp"

namespace osg {

using ordered_json = nlohmann::ordered_json;

Osg::Osg(std::shared_ptr<const OsgSpec> spec, Checking checking)
    : spec_(std::move(spec)), checking_(checking) {
  if (!spec_) throw GraphError("graph requires a spec");
}

NodeId Osg::add_node(std::string_view class_name, std::string_view label, NodeAttributes attrs) {
  const ClassSpec* cls = spec_->find(class_name);
  if (cls == nullptr && checking_ == Checking::Strict) {
    throw GraphError("undeclared class '" + std::string(class_name) + "'");
  }
  if (label.empty() && checking_ == Checking::Strict) throw GraphError("node label must be non-empty");

  const std::string base(label);
  NodeId id;
  do {
    id = NodeId(base + "_" + std::to_string(++counters_[base]));
  } while (has_node(id));

  Node node;
  node.id = id;
  node.class_name = std::string(class_name);
  node.layer = cls != nullptr ? cls->layer_id : 0;
  node.label = base;
  node.description = std::move(attrs.description);
  node.image_ref = std::move(attrs.image_ref);
  node.provenance = std::move(attrs.provenance);
  insert_node(std::move(node));
  return id;
}

void Osg::insert_node(Node node) {
  if (has_node(node.id)) throw GraphError("duplicate node id '" + node.id.value + "'");
  // Keep the per-label counter ahead of ids read from files.
  const std::string prefix = node.label + "_";
  if (node.id.value.size() > prefix.size() && node.id.value.compare(0, prefix.size(), prefix) == 0) {
    const std::string suffix = node.id.value.substr(prefix.size());
    if (std::all_of(suffix.begin(), suffix.end(), [](unsigned char c) { return std::isdigit(c); }) &&
        suffix.size() < 9) {
      auto& counter = counters_[node.label];
      counter = std::max(counter, std::stoi(suffix));
    }
  }
  index_.emplace(node.id.value, nodes_.size());
  nodes_.push_back(std::move(node));
  out_edges_.emplace_back();
  in_edges_.emplace_back();
}

void Osg::check_edge(const Node& src, EdgeType type, const Node& dst) const {
  if (!spec_->permits(src.class_name, type, dst.class_name)) {
    throw GraphError("illegal edge " + src.id.value + " -[" + std::string(to_string(type)) + "]-> " +
                     dst.id.value + " (" + src.class_name + " -> " + dst.class_name + ")");
  }
  if (type == EdgeType::Contains) {
    auto parent = contains_parent(dst.id);
    if (parent && *parent != src.id) {
      throw GraphError("node '" + dst.id.value + "' already contained by '" + parent->value + "'");
    }
  }
}

void Osg::add_edge(const NodeId& source, EdgeType type, const NodeId& target) {
  if (!has_node(source)) throw GraphError("unknown edge source '" + source.value + "'");
  if (!has_node(target)) throw GraphError("unknown edge target '" + target.value + "'");
  if (has_edge(source, type, target)) return;
  if (checking_ == Checking::Strict) check_edge(node(source), type, node(target));
  edge_set_.emplace(source.value, static_cast<int>(type), target.value);
  out_edges_[index_of(source)].push_back(edges_.size());
  in_edges_[index_of(target)].push_back(edges_.size());
  edges_.push_back({source, type, target});
}

void Osg::merge_observation(const NodeId& id, const NodeAttributes& attrs) {
  Node& n = nodes_.at(index_of(id));
  if (n.description.empty()) n.description = attrs.description;
  if (attrs.image_ref) n.image_ref = attrs.image_ref;
  for (const auto& [gt, count] : attrs.provenance) n.provenance[gt] += count;
}

bool Osg::has_edge(const NodeId& source, EdgeType type, const NodeId& target) const {
  return edge_set_.count({source.value, static_cast<int>(type), target.value}) != 0;
}

const Node& Osg::node(const NodeId& id) const { return nodes_.at(index_of(id)); }

std::size_t Osg::index_of(const NodeId& id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) throw GraphError("unknown node '" + id.value + "'");
  return it->second;
}

std::vector<NodeId> Osg::out_neighbors(const NodeId& id, EdgeType type) const {
  std::vector<NodeId> out;
  for (std::size_t e : out_edges_[index_of(id)]) {
    if (edges_[e].type == type) out.push_back(edges_[e].target);
  }
  return out;
}

std::vector<NodeId> Osg::in_neighbors(const NodeId& id, EdgeType type) const {
  std::vector<NodeId> out;
  for (std::size_t e : in_edges_[index_of(id)]) {
    if (edges_[e].type == type) out.push_back(edges_[e].source);
  }
  return out;
}

std::vector<std::size_t> Osg::incident_edges(const NodeId& id) const {
  const std::size_t i = index_of(id);
  std::vector<std::size_t> out = out_edges_[i];
  out.insert(out.end(), in_edges_[i].begin(), in_edges_[i].end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<NodeId> Osg::contains_parent(const NodeId& id) const {
  auto parents = in_neighbors(id, EdgeType::Contains);
  if (parents.empty()) return std::nullopt;
  return parents.front();
}

// ---------------------------------------------------------------------------

std::vector<NodeId> nodes_of_layer(const Osg& graph, int layer) {
  std::vector<NodeId> out;
  for (const auto& n : graph.nodes()) {
    if (n.layer == layer) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> children(const Osg& graph, const NodeId& region) {
  return graph.out_neighbors(region, EdgeType::Contains);
}

std::vector<NodeId> connected_regions(const Osg& graph, const NodeId& node) {
  std::vector<NodeId> out;
  for (std::size_t e : graph.incident_edges(node)) {
    const Edge& edge = graph.edges()[e];
    if (edge.type != EdgeType::ConnectsTo) continue;
    const NodeId& other = edge.source == node ? edge.target : edge.source;
    if (graph.node(other).layer >= 3 && std::find(out.begin(), out.end(), other) == out.end()) {
      out.push_back(other);
    }
  }
  return out;
}

std::vector<NodeId> place_leaves(const Osg& graph, const NodeId& place) {
  std::vector<NodeId> out;
  auto push = [&out](const NodeId& id) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  };
  for (std::size_t e : graph.incident_edges(place)) {
    const Edge& edge = graph.edges()[e];
    if (edge.type == EdgeType::Contains && edge.source == place) {
      if (graph.node(edge.target).is_leaf()) push(edge.target);
    } else if (edge.type == EdgeType::ConnectsTo) {
      const NodeId& other = edge.source == place ? edge.target : edge.source;
      if (graph.node(other).layer == 2) push(other);
    }
  }
  return out;
}

ObjectFeatures object_features(const Osg& graph, const NodeId& id) {
  const Node& owner = graph.node(id);
  ObjectFeatures features{id, {}};
  std::vector<NodeId> neighbours;
  if (owner.is_leaf()) {
    neighbours = graph.out_neighbors(id, EdgeType::IsNear);
  } else if (owner.is_place()) {
    neighbours = place_leaves(graph, id);
  } else {
    throw GraphError("object features are undefined for region abstraction '" + id.value + "'");
  }
  for (const auto& n : neighbours) {
    const Node& leaf = graph.node(n);
    features.entries.push_back({n, leaf.label, leaf.description});
  }
  return features;
}

std::vector<Diagnostic> validate_graph_against_spec(const Osg& graph, const OsgSpec& spec) {
  std::vector<Diagnostic> out;
  for (const auto& n : graph.nodes()) {
    const ClassSpec* cls = spec.find(n.class_name);
    if (cls == nullptr) {
      out.push_back({std::string(rule::kUndeclaredClass), n.id.value,
                     "class '" + n.class_name + "' is not declared"});
      continue;
    }
    if (cls->layer_id != n.layer) {
      out.push_back({std::string(rule::kNodeLayer), n.id.value,
                     "layer " + std::to_string(n.layer) + " does not match class layer " +
                         std::to_string(cls->layer_id)});
    }
    if (n.label.empty()) {
      out.push_back({std::string(rule::kEmptyLabel), n.id.value, "label must be non-empty"});
    }
  }
  std::map<std::string, int> parents;
  for (const auto& e : graph.edges()) {
    const std::string subject =
        e.source.value + " -[" + std::string(to_string(e.type)) + "]-> " + e.target.value;
    if (!graph.has_node(e.source) || !graph.has_node(e.target)) {
      out.push_back({std::string(rule::kDanglingEdge), subject, "edge endpoint missing"});
      continue;
    }
    const Node& src = graph.node(e.source);
    const Node& dst = graph.node(e.target);
    if (spec.has_class(src.class_name) && spec.has_class(dst.class_name) &&
        !spec.permits(src.class_name, e.type, dst.class_name)) {
      out.push_back({std::string(rule::kIllegalEdge), subject,
                     "(" + src.class_name + ", " + std::string(to_string(e.type)) + ", " +
                         dst.class_name + ") is not permitted"});
    }
    if (e.type == EdgeType::Contains && ++parents[e.target.value] == 2) {
      out.push_back({std::string(rule::kMultiParent), e.target.value,
                     "node has more than one contains-parent"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json layout_json(const Osg& graph) {
  const OsgSpec& spec = graph.spec();
  std::vector<const ClassSpec*> order;
  for (const auto& c : spec.classes()) {
    if (c.layer_id >= 2) order.push_back(&c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const ClassSpec* a, const ClassSpec* b) { return a->layer_id > b->layer_id; });

  auto ids = [](const std::vector<NodeId>& list) {
    ordered_json arr = ordered_json::array();
    for (const auto& id : list) arr.push_back(id.value);
    return arr;
  };

  ordered_json layout = ordered_json::object();
  for (const ClassSpec* cls : order) {
    ordered_json group = ordered_json::object();
    for (const auto& n : graph.nodes()) {
      if (n.class_name != cls->name) continue;
      ordered_json entry = ordered_json::object();
      if (n.is_abstraction()) {
        auto kids = children(graph, n.id);
        if (!kids.empty()) entry["contains"] = ids(kids);
      }
      if (n.layer == 2) entry["is near"] = ids(graph.out_neighbors(n.id, EdgeType::IsNear));
      auto links = graph.out_neighbors(n.id, EdgeType::ConnectsTo);
      if (!links.empty()) entry["connects to"] = ids(links);
      group[n.id.value] = std::move(entry);
    }
    if (!group.empty()) layout[cls->name] = std::move(group);
  }
  return layout;
}

}  // namespace

std::string render_layout(const Osg& graph) { return detail::compact(layout_json(graph)); }

std::string serialize_graph(const Osg& graph) {
  ordered_json doc = ordered_json::object();
  ordered_json nodes = ordered_json::array();
  for (const auto& n : graph.nodes()) {
    ordered_json node = ordered_json::object();
    node["id"] = n.id.value;
    node["class"] = n.class_name;
    node["layer"] = n.layer;
    node["label"] = n.label;
    if (!n.description.empty()) node["description"] = n.description;
    if (n.image_ref) node["image_ref"] = *n.image_ref;
    if (!n.provenance.empty()) {
      ordered_json prov = ordered_json::object();
      for (const auto& [gt, count] : n.provenance) prov[gt] = count;
      node["provenance"] = std::move(prov);
    }
    nodes.push_back(std::move(node));
  }
  ordered_json edges = ordered_json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back(ordered_json{{"src", e.source.value},
                                 {"type", std::string(to_string(e.type))},
                                 {"dst", e.target.value}});
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["layout"] = layout_json(graph);
  return doc.dump(2) + "\n";
}

Osg deserialize_graph(std::string_view text, std::shared_ptr<const OsgSpec> spec,
                      Osg::Checking checking) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphError(std::string("malformed graph file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges") ||
      !doc["nodes"].is_array() || !doc["edges"].is_array()) {
    throw GraphError("malformed graph file: expected \"nodes\" and \"edges\" arrays");
  }
  Osg graph(std::move(spec), checking);
  try {
    for (const auto& item : doc["nodes"]) {
      Node n;
      n.id = NodeId(item.at("id").get<std::string>());
      n.class_name = item.at("class").get<std::string>();
      n.layer = item.at("layer").get<int>();
      n.label = item.at("label").get<std::string>();
      n.description = item.value("description", std::string());
      if (item.contains("image_ref")) n.image_ref = item["image_ref"].get<std::string>();
      if (item.contains("provenance")) {
        for (const auto& [gt, count] : item["provenance"].items()) n.provenance[gt] = count.get<int>();
      }
      if (checking == Osg::Checking::Strict) {
        const ClassSpec* cls = graph.spec().find(n.class_name);
        if (cls == nullptr) throw GraphError("spec mismatch: undeclared class '" + n.class_name + "'");
        if (cls->layer_id != n.layer) {
          throw GraphError("spec mismatch: node '" + n.id.value + "' has layer " +
                           std::to_string(n.layer) + ", class declares " +
                           std::to_string(cls->layer_id));
        }
      }
      graph.insert_node(std::move(n));
    }
    for (const auto& item : doc["edges"]) {
      auto type = edge_type_from_string(item.at("type").get<std::string>());
      if (!type) throw GraphError("malformed graph file: unknown edge type");
      graph.add_edge(NodeId(item.at("src").get<std::string>()), *type,
                     NodeId(item.at("dst").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph file: ") + e.what());
  }
  return graph;
}

std::string render_dot(const Osg& graph) {
  std::ostringstream out;
  auto quote = [](const std::string& s) { return nlohmann::json(s).dump(); };
  out << "digraph osg {\n  rankdir=BT;\n";
  std::set<int> layers;
  for (const auto& n : graph.nodes()) layers.insert(n.layer);
  for (int layer : layers) {
    out << "  subgraph layer_" << layer << " {\n    rank=same;\n";
    for (const auto& n : graph.nodes()) {
      if (n.layer != layer) continue;
      const char* shape = n.is_leaf() ? (n.layer == 2 ? "diamond" : "ellipse")
                                      : (n.is_place() ? "box" : "box3d");
      out << "    " << quote(n.id.value) << " [label=" << quote(n.id.value + "\n" + n.class_name)
          << ", shape=" << shape << "];\n";
    }
    out << "  }\n";
  }
  for (const auto& e : graph.edges()) {
    const char* style = e.type == EdgeType::Contains     ? "solid"
                        : e.type == EdgeType::ConnectsTo ? "dashed"
                                                         : "dotted";
    out << "  " << quote(e.source.value) << " -> " << quote(e.target.value) << " [style=" << style
        << ", label=" << quote(std::string(to_string(e.type))) << "];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace osg
