#pragma once

// OSG meta-structure and environment-type specifications.
//
// A specification instantiates the fixed meta-structure (Objects, Connectors,
// Places, Region Abstractions; is-near / connects-to / contains edges) for one
// kind of environment. Specs are loaded from JSON documents whose keys are class
// names plus an optional "state" array.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace osg {

enum class LayerType { Object, Connector, Place, RegionAbstraction };

enum class EdgeType { IsNear, ConnectsTo, Contains };

std::string_view to_string(LayerType type);
std::string_view to_string(EdgeType type);

/// Parses the wire names "is near", "connects to", "contains".
std::optional<EdgeType> edge_type_from_string(std::string_view text);

/// Fixed rules shared by every specification.
struct MetaStructure {
  /// Layer type implied by a layer id (1 Object, 2 Connector, 3 Place, >=4 abstraction).
  static std::optional<LayerType> layer_type_for_id(int layer_id);

  /// Whether an edge of `type` may ever run from a `from` class to a `to` class.
  /// Contains legality also depends on layer adjacency, see OsgSpec.
  static bool may_emit(LayerType from, EdgeType type);
  static bool may_target(LayerType from, EdgeType type, LayerType to);
};

struct ClassSpec {
  std::string name;
  /// As written in the document; absent for the Object class.
  std::optional<LayerType> declared_type;
  int layer_id = 0;
  std::vector<std::string> contains;
  std::vector<std::string> connects_to;
  std::vector<std::string> is_near;
  /// False when the document omitted "is near"; the Object class then
  /// defaults to all leaf classes.
  bool is_near_declared = false;

  LayerType layer_type() const;
  const std::vector<std::string>& targets(EdgeType type) const;

  bool operator==(const ClassSpec&) const = default;
};

/// Rule identifiers reported by validate_spec.
namespace rule {
inline constexpr std::string_view kObjectLayer = "object-layer";
inline constexpr std::string_view kLayerType = "layer-type";
inline constexpr std::string_view kPlaceLayer = "place-layer";
inline constexpr std::string_view kUnresolvedRef = "unresolved-ref";
inline constexpr std::string_view kIsNearOrigin = "is-near-origin";
inline constexpr std::string_view kIsNearTarget = "is-near-target";
inline constexpr std::string_view kContainsOrigin = "contains-origin";
inline constexpr std::string_view kContainsTarget = "contains-target";
inline constexpr std::string_view kConnectsToClass = "connects-to-class";
inline constexpr std::string_view kStateClass = "state-class";
// graph-level rules
inline constexpr std::string_view kUndeclaredClass = "undeclared-class";
inline constexpr std::string_view kNodeLayer = "node-layer";
inline constexpr std::string_view kIllegalEdge = "illegal-edge";
inline constexpr std::string_view kDanglingEdge = "dangling-edge";
inline constexpr std::string_view kMultiParent = "multi-parent";
inline constexpr std::string_view kEmptyLabel = "empty-label";
}  // namespace rule

struct Diagnostic {
  std::string rule;
  std::string subject;  // class name, node id or edge
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics);

class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& message,
                     std::vector<Diagnostic> diagnostics = {})
      : std::runtime_error(message), diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

class OsgSpec {
 public:
  OsgSpec() = default;
  OsgSpec(std::vector<ClassSpec> classes, std::vector<std::string> state_classes,
          bool state_declared = true);

  const std::vector<ClassSpec>& classes() const { return classes_; }
  const std::vector<std::string>& state_classes() const { return state_classes_; }
  bool state_declared() const { return state_declared_; }

  const ClassSpec* find(std::string_view name) const;
  const ClassSpec& at(std::string_view name) const;
  bool has_class(std::string_view name) const { return find(name) != nullptr; }

  /// Largest declared layer id (N).
  int num_layers() const;
  /// Sorted, de-duplicated layer ids present in this OsgSpec.
  std::vector<int> declared_layers() const;
  /// Next declared layer id strictly below `layer_id` (3 for the lowest
  /// abstraction layer); nullopt when none.
  std::optional<int> next_lower_layer(int layer_id) const;

  std::vector<const ClassSpec*> classes_of(LayerType type) const;
  std::vector<const ClassSpec*> classes_at_layer(int layer_id) const;
  const ClassSpec* object_class() const;

  /// Resolved target list: applies the Object is-near default.
  std::vector<std::string> targets(const ClassSpec& cls, EdgeType type) const;
  /// Whether this OsgSpec permits the (source class, type, target class) triple.
  bool permits(std::string_view from, EdgeType type, std::string_view to) const;

  /// Abstraction classes some Connector class lists in "connects to"
  /// (e.g. floors reached through stairs).
  bool is_geometry_defined(std::string_view abstraction_class) const;

  bool operator==(const OsgSpec&) const = default;

 private:
  std::vector<ClassSpec> classes_;
  std::vector<std::string> state_classes_;
  bool state_declared_ = true;
};

/// Parses the document without enforcing meta-structure rules. Throws
/// SpecError on syntax errors, unknown fields, bad field types and duplicate
/// class names.
OsgSpec parse_spec_document(std::string_view text);

/// Parses and validates; throws SpecError carrying the diagnostics when the
/// document violates the meta-structure.
OsgSpec parse_spec(std::string_view text);

OsgSpec load_spec_file(const std::string& path);

/// One diagnostic per violated rule; empty iff the OsgSpec is valid.
std::vector<Diagnostic> validate_spec(const OsgSpec& spec);

std::string serialize_spec(const OsgSpec& spec);

}  // namespace osg
