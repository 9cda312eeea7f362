#include "osg/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace osg {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(LayerType type) {
  switch (type) {
    case LayerType::Object: return "Object";
    case LayerType::Connector: return "Connector";
    case LayerType::Place: return "Place";
    case LayerType::RegionAbstraction: return "Region Abstraction";
  }
  return "?";
}

std::string_view to_string(EdgeType type) {
  switch (type) {
    case EdgeType::IsNear: return "is near";
    case EdgeType::ConnectsTo: return "connects to";
    case EdgeType::Contains: return "contains";
  }
  return "?";
}

std::optional<EdgeType> edge_type_from_string(std::string_view text) {
  if (text == "is near") return EdgeType::IsNear;
  if (text == "connects to") return EdgeType::ConnectsTo;
  if (text == "contains") return EdgeType::Contains;
  return std::nullopt;
}

namespace {

std::optional<LayerType> layer_type_from_string(std::string_view text) {
  if (text == "Place") return LayerType::Place;
  if (text == "Connector") return LayerType::Connector;
  if (text == "Region Abstraction") return LayerType::RegionAbstraction;
  return std::nullopt;
}

bool is_leaf(LayerType t) { return t == LayerType::Object || t == LayerType::Connector; }

bool is_region(LayerType t) {
  return t == LayerType::Place || t == LayerType::RegionAbstraction;
}

}  // namespace

std::optional<LayerType> MetaStructure::layer_type_for_id(int layer_id) {
  if (layer_id < 1) return std::nullopt;
  if (layer_id == 1) return LayerType::Object;
  if (layer_id == 2) return LayerType::Connector;
  if (layer_id == 3) return LayerType::Place;
  return LayerType::RegionAbstraction;
}

bool MetaStructure::may_emit(LayerType from, EdgeType type) {
  switch (type) {
    case EdgeType::IsNear: return is_leaf(from);
    case EdgeType::ConnectsTo: return from != LayerType::Object;
    case EdgeType::Contains: return is_region(from);
  }
  return false;
}

bool MetaStructure::may_target(LayerType from, EdgeType type, LayerType to) {
  if (!may_emit(from, type)) return false;
  switch (type) {
    case EdgeType::IsNear: return is_leaf(to);
    case EdgeType::ConnectsTo: return to != LayerType::Object;
    case EdgeType::Contains:
      if (from == LayerType::Place) return to == LayerType::Object;
      return is_region(to);
  }
  return false;
}

LayerType ClassSpec::layer_type() const {
  return declared_type.value_or(LayerType::Object);
}

const std::vector<std::string>& ClassSpec::targets(EdgeType type) const {
  switch (type) {
    case EdgeType::IsNear: return is_near;
    case EdgeType::ConnectsTo: return connects_to;
    case EdgeType::Contains: return contains;
  }
  return contains;
}

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  std::ostringstream out;
  for (const auto& d : diagnostics) {
    out << "[" << d.rule << "] " << d.subject << ": " << d.message << "\n";
  }
  return out.str();
}

OsgSpec::OsgSpec(std::vector<ClassSpec> classes, std::vector<std::string> state_classes,
                 bool state_declared)
    : classes_(std::move(classes)),
      state_classes_(std::move(state_classes)),
      state_declared_(state_declared) {}

const ClassSpec* OsgSpec::find(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const ClassSpec& OsgSpec::at(std::string_view name) const {
  const ClassSpec* c = find(name);
  if (c == nullptr) throw SpecError("undeclared class '" + std::string(name) + "'");
  return *c;
}

int OsgSpec::num_layers() const {
  int n = 0;
  for (const auto& c : classes_) n = std::max(n, c.layer_id);
  return n;
}

std::vector<int> OsgSpec::declared_layers() const {
  std::set<int> ids;
  for (const auto& c : classes_) ids.insert(c.layer_id);
  return {ids.begin(), ids.end()};
}

std::optional<int> OsgSpec::next_lower_layer(int layer_id) const {
  std::optional<int> best;
  for (const auto& c : classes_) {
    if (c.layer_id < layer_id && c.layer_id >= 3 && (!best || c.layer_id > *best)) {
      best = c.layer_id;
    }
  }
  return best;
}

std::vector<const ClassSpec*> OsgSpec::classes_of(LayerType type) const {
  std::vector<const ClassSpec*> out;
  for (const auto& c : classes_) {
    if (c.layer_type() == type) out.push_back(&c);
  }
  return out;
}

std::vector<const ClassSpec*> OsgSpec::classes_at_layer(int layer_id) const {
  std::vector<const ClassSpec*> out;
  for (const auto& c : classes_) {
    if (c.layer_id == layer_id) out.push_back(&c);
  }
  return out;
}

const ClassSpec* OsgSpec::object_class() const {
  for (const auto& c : classes_) {
    if (c.layer_id == 1) return &c;
  }
  return nullptr;
}

std::vector<std::string> OsgSpec::targets(const ClassSpec& cls, EdgeType type) const {
  if (type == EdgeType::IsNear && cls.layer_id == 1 && !cls.is_near_declared) {
    std::vector<std::string> leaves;
    for (const auto& c : classes_) {
      if (c.layer_id == 1 || c.layer_id == 2) leaves.push_back(c.name);
    }
    return leaves;
  }
  return cls.targets(type);
}

bool OsgSpec::permits(std::string_view from, EdgeType type, std::string_view to) const {
  const ClassSpec* src = find(from);
  if (src == nullptr || find(to) == nullptr) return false;
  const auto list = targets(*src, type);
  return std::find(list.begin(), list.end(), to) != list.end();
}

bool OsgSpec::is_geometry_defined(std::string_view abstraction_class) const {
  for (const auto* c : classes_of(LayerType::Connector)) {
    const auto& ct = c->connects_to;
    if (std::find(ct.begin(), ct.end(), abstraction_class) != ct.end()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::vector<std::string> string_array(const ordered_json& value, const std::string& where) {
  if (!value.is_array()) throw SpecError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) throw SpecError(where + ": expected an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

ClassSpec parse_class(const std::string& name, const ordered_json& body) {
  if (!body.is_object()) throw SpecError("class '" + name + "': expected an object");
  ClassSpec cls;
  cls.name = name;
  bool has_layer_id = false;
  for (const auto& [key, value] : body.items()) {
    const std::string where = "class '" + name + "' field '" + key + "'";
    if (key == "layer_type") {
      if (!value.is_string()) throw SpecError(where + ": expected a string");
      auto type = layer_type_from_string(value.get<std::string>());
      if (!type) throw SpecError(where + ": unknown layer type '" + value.get<std::string>() + "'");
      cls.declared_type = type;
    } else if (key == "layer_id") {
      if (!value.is_number_integer()) throw SpecError(where + ": expected an integer");
      cls.layer_id = value.get<int>();
      has_layer_id = true;
    } else if (key == "contains") {
      cls.contains = string_array(value, where);
    } else if (key == "connects to") {
      cls.connects_to = string_array(value, where);
    } else if (key == "is near") {
      cls.is_near = string_array(value, where);
      cls.is_near_declared = true;
    } else {
      throw SpecError(where + ": unknown field");
    }
  }
  if (!has_layer_id) throw SpecError("class '" + name + "': missing required field 'layer_id'");
  return cls;
}

// Rejects duplicate keys inside any object; nlohmann keeps the last one silently.
class DuplicateKeyGuard {
 public:
  bool operator()(int /*depth*/, nlohmann::json::parse_event_t event, ordered_json& parsed) {
    using Event = nlohmann::json::parse_event_t;
    if (event == Event::object_start) {
      scopes_.emplace_back();
    } else if (event == Event::object_end) {
      if (!scopes_.empty()) scopes_.pop_back();
    } else if (event == Event::key) {
      const auto key = parsed.get<std::string>();
      if (!scopes_.empty() && !scopes_.back().insert(key).second) {
        const bool top = scopes_.size() == 1;
        throw SpecError(std::string(top ? "duplicate class name '" : "duplicate field '") + key + "'");
      }
    }
    return true;
  }

 private:
  std::vector<std::set<std::string>> scopes_;
};

}  // namespace

OsgSpec parse_spec_document(std::string_view text) {
  ordered_json doc;
  DuplicateKeyGuard guard;
  try {
    doc = ordered_json::parse(text.begin(), text.end(),
                              [&guard](int depth, nlohmann::json::parse_event_t event,
                                       ordered_json& parsed) { return guard(depth, event, parsed); });
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError(std::string("syntax error: ") + e.what());
  }
  if (!doc.is_object()) throw SpecError("syntax error: spec document must be a JSON object");

  std::vector<ClassSpec> classes;
  std::optional<std::vector<std::string>> state;
  for (const auto& [key, value] : doc.items()) {
    if ((key == "state" || key == "State") && value.is_array()) {
      if (state) throw SpecError("duplicate 'state' entry");
      state = string_array(value, "'" + key + "'");
      continue;
    }
    classes.push_back(parse_class(key, value));
  }

  if (state) return OsgSpec(std::move(classes), std::move(*state), true);
  std::vector<std::string> places;
  for (const auto& c : classes) {
    if (c.declared_type == LayerType::Place) places.push_back(c.name);
  }
  return OsgSpec(std::move(classes), std::move(places), false);
}

OsgSpec parse_spec(std::string_view text) {
  OsgSpec spec = parse_spec_document(text);
  auto diagnostics = validate_spec(spec);
  if (!diagnostics.empty()) {
    std::string message = "spec violates the meta-structure:\n" + format_diagnostics(diagnostics);
    throw SpecError(message, std::move(diagnostics));
  }
  return spec;
}

OsgSpec load_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open spec file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_spec(buffer.str());
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Diagnostic> validate_spec(const OsgSpec& spec) {
  std::vector<Diagnostic> out;
  auto report = [&out](std::string_view rule, const std::string& subject, std::string message) {
    out.push_back({std::string(rule), subject, std::move(message)});
  };

  std::vector<std::string> object_layer;
  bool has_place = false;
  for (const auto& c : spec.classes()) {
    if (c.layer_id == 1) object_layer.push_back(c.name);
    const auto implied = MetaStructure::layer_type_for_id(c.layer_id);
    if (!implied) {
      report(rule::kLayerType, c.name, "layer_id must be >= 1");
    } else if (!c.declared_type && *implied != LayerType::Object) {
      report(rule::kLayerType, c.name,
             "layer_type may be omitted only for the Object class (layer 1)");
    } else if (c.declared_type && *c.declared_type != *implied) {
      report(rule::kLayerType, c.name,
             "layer_type '" + std::string(to_string(*c.declared_type)) + "' does not match layer " +
                 std::to_string(c.layer_id));
    }
    if (c.declared_type == LayerType::Place && c.layer_id == 3) has_place = true;
  }
  if (object_layer.size() != 1) {
    std::string names;
    for (const auto& n : object_layer) names += (names.empty() ? "" : ", ") + n;
    report(rule::kObjectLayer, names.empty() ? "<spec>" : names,
           "exactly one class must have layer_id 1, found " + std::to_string(object_layer.size()));
  }
  if (!has_place) report(rule::kPlaceLayer, "<spec>", "no Place class at layer 3");

  for (const auto& c : spec.classes()) {
    const LayerType from = c.layer_type();
    for (EdgeType type : {EdgeType::IsNear, EdgeType::ConnectsTo, EdgeType::Contains}) {
      const auto& list = c.targets(type);
      const std::string field(to_string(type));
      if (!list.empty() && !MetaStructure::may_emit(from, type)) {
        const auto rule_id = type == EdgeType::IsNear     ? rule::kIsNearOrigin
                             : type == EdgeType::Contains ? rule::kContainsOrigin
                                                          : rule::kConnectsToClass;
        report(rule_id, c.name,
               std::string(to_string(from)) + " classes may not emit '" + field + "' edges");
        continue;
      }
      for (const auto& target_name : list) {
        const ClassSpec* target = spec.find(target_name);
        if (target == nullptr) {
          report(rule::kUnresolvedRef, c.name,
                 "'" + field + "' references undeclared class '" + target_name + "'");
          continue;
        }
        const LayerType to = target->layer_type();
        switch (type) {
          case EdgeType::IsNear:
            if (!MetaStructure::may_target(from, type, to)) {
              report(rule::kIsNearTarget, c.name,
                     "'is near' may only target Object/Connector classes, not '" + target_name + "'");
            }
            break;
          case EdgeType::ConnectsTo:
            if (!MetaStructure::may_target(from, type, to)) {
              report(rule::kConnectsToClass, c.name,
                     "'connects to' may not target the Object class '" + target_name + "'");
            }
            break;
          case EdgeType::Contains: {
            bool ok = MetaStructure::may_target(from, type, to);
            if (ok && from == LayerType::RegionAbstraction) {
              ok = spec.next_lower_layer(c.layer_id) == target->layer_id;
            }
            if (ok && from == LayerType::Place) ok = target->layer_id == 1;
            if (!ok) {
              report(rule::kContainsTarget, c.name,
                     "'contains' must target the next lower declared layer, not '" + target_name +
                         "' (layer " + std::to_string(target->layer_id) + ")");
            }
            break;
          }
        }
      }
    }
  }

  for (const auto& s : spec.state_classes()) {
    const ClassSpec* c = spec.find(s);
    if (c == nullptr || c->declared_type != LayerType::Place) {
      report(rule::kStateClass, s, "state entries must name declared Place classes");
    }
  }
  return out;
}

std::string serialize_spec(const OsgSpec& spec) {
  ordered_json doc = ordered_json::object();
  for (const auto& c : spec.classes()) {
    ordered_json body = ordered_json::object();
    if (c.declared_type) body["layer_type"] = std::string(to_string(*c.declared_type));
    body["layer_id"] = c.layer_id;
    if (!c.contains.empty()) body["contains"] = c.contains;
    if (!c.connects_to.empty()) body["connects to"] = c.connects_to;
    if (c.is_near_declared) body["is near"] = c.is_near;
    doc[c.name] = std::move(body);
  }
  if (spec.state_declared()) doc["state"] = spec.state_classes();
  return doc.dump(4) + "\n";
}

}  // namespace osg
