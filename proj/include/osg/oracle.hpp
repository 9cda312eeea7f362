#pragma once

// Semantic judgments consumed by the mapper and the reasoner.
//
// Every call that the mapping and planning algorithms delegate to a language
// or vision-language model goes through SemanticOracle. RuleOracle is the
// deterministic stand-in driven by a JSON table of synonyms and
// co-occurrence priors.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "osg/graph.hpp"
#include "osg/schema.hpp"

namespace osg {

/// Typed failure of an oracle backend (timeout, transport, unparseable reply).
class OracleError : public std::runtime_error {
 public:
  enum class Kind { Timeout, Network, HttpStatus, Parse, InvalidChoice, ReplayMiss, Config };

  OracleError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One parsed image element, named "<label>_<index>" as in the prompts.
struct SceneElement {
  std::string name;
  std::string label;
};

/// A leaf (or leaf candidate) with its neighbourhood features.
struct LeafView {
  NodeId id;  // empty for observed, not yet inserted elements
  std::string label;
  std::string description;
  std::vector<FeatureEntry> features;
};

struct PlaceRef {
  NodeId id;
  std::string label;
};

struct AbstractionQuery {
  std::string abstraction_class;
  std::string place_class;
  std::string place_label;
  std::optional<PlaceRef> previous_parent;
  std::optional<std::string> previous_place_label;
  std::optional<std::string> subgoal_label;
  std::vector<PlaceRef> existing;
};

/// Either an existing abstraction node or the label of a new one.
struct AbstractionAnswer {
  std::optional<NodeId> existing;
  std::string new_label;
};

struct RegionChoiceQuery {
  std::string layer_class;  // class names of the layer being chosen, "/"-joined
  std::string goal;
  std::vector<NodeId> candidates;
  bool restate = false;  // second attempt after an invalid answer
};

struct GoalChoiceQuery {
  std::string goal;
  std::vector<NodeId> candidates;
  bool restate = false;
};

class SemanticOracle {
 public:
  virtual ~SemanticOracle() = default;

  /// Class of each element: the Place class for the place entry, a Connector
  /// class, the Object class, or nullopt when discarded.
  virtual std::vector<std::optional<std::string>> classify_elements(
      const OsgSpec& spec, const std::string& place_class,
      const std::vector<SceneElement>& elements) = 0;

  /// Stored places whose label has a similar meaning to `label`.
  virtual std::vector<NodeId> similar_places(const OsgSpec& spec, const std::string& label,
                                             const std::vector<PlaceRef>& places) = 0;

  virtual bool place_match(const OsgSpec& spec, const std::string& place_class,
                           const ObjectFeatures& observed, const ObjectFeatures& stored) = 0;

  /// The candidate most likely to be the same physical element as `query`.
  virtual std::optional<NodeId> associate_object(const OsgSpec& spec, const LeafView& query,
                                                 const std::vector<LeafView>& candidates) = 0;

  virtual AbstractionAnswer infer_abstract_region(const OsgSpec& spec,
                                                  const AbstractionQuery& query) = 0;

  /// Must return a member of query.candidates; callers validate.
  virtual NodeId propose_region_choice(const OsgSpec& spec, const Osg& graph,
                                       const RegionChoiceQuery& query) = 0;
  virtual NodeId propose_goal_choice(const OsgSpec& spec, const Osg& graph,
                                     const GoalChoiceQuery& query) = 0;
};

/// Symmetric, transitive label equivalences. The first label of the first
/// group a label appears in is its canonical form.
class SynonymTable {
 public:
  SynonymTable() = default;
  explicit SynonymTable(const std::vector<std::vector<std::string>>& groups);

  std::string canonical(const std::string& label) const;
  bool equivalent(const std::string& a, const std::string& b) const {
    return canonical(a) == canonical(b);
  }
  /// All labels equivalent to `label` (including itself), in table order.
  std::vector<std::string> group_of(const std::string& label) const;
  const std::vector<std::vector<std::string>>& groups() const { return groups_; }

 private:
  std::vector<std::vector<std::string>> groups_;
  std::map<std::string, std::size_t> group_index_;
};

struct RuleOracleConfig {
  SynonymTable synonyms;
  /// (evidence label, goal label) -> weight in [0,1], keyed by canonical labels.
  std::map<std::pair<std::string, std::string>, double> cooccurrence;
  double feature_match_threshold = 0.5;
  std::vector<std::string> discard_labels{"floor", "ceiling", "wall"};
  /// Element label -> Connector classes it may belong to; the first one the
  /// active spec declares wins.
  std::map<std::string, std::vector<std::string>> connector_labels;
  /// Place label -> label of the region abstraction it belongs to.
  std::map<std::string, std::string> abstraction_labels;

  double weight(const std::string& evidence, const std::string& goal) const;

  static RuleOracleConfig from_json(const std::string& text);
  static RuleOracleConfig load(const std::string& path);
};

/// Lower-cased alphanumeric tokens of a description.
std::vector<std::string> description_tokens(const std::string& text);

/// Token-set Jaccard of two descriptions; 1 when both are empty.
double description_similarity(const std::string& a, const std::string& b);

/// Soft Jaccard of two feature lists: entries are paired one-to-one (maximum
/// matching) when their canonical labels agree and their descriptions share a
/// token or one of them is empty; J = m / (|A| + |B| - m), 1 for two empty lists.
double feature_similarity(const std::vector<FeatureEntry>& a, const std::vector<FeatureEntry>& b,
                          const SynonymTable& synonyms);

/// Label part of a "<label>_<n>" element or node name.
std::string strip_index(const std::string& name);

class RuleOracle : public SemanticOracle {
 public:
  explicit RuleOracle(RuleOracleConfig config) : config_(std::move(config)) {}

  const RuleOracleConfig& config() const { return config_; }

  std::vector<std::optional<std::string>> classify_elements(
      const OsgSpec& spec, const std::string& place_class,
      const std::vector<SceneElement>& elements) override;
  std::vector<NodeId> similar_places(const OsgSpec& spec, const std::string& label,
                                     const std::vector<PlaceRef>& places) override;
  bool place_match(const OsgSpec& spec, const std::string& place_class,
                   const ObjectFeatures& observed, const ObjectFeatures& stored) override;
  std::optional<NodeId> associate_object(const OsgSpec& spec, const LeafView& query,
                                         const std::vector<LeafView>& candidates) override;
  AbstractionAnswer infer_abstract_region(const OsgSpec& spec,
                                          const AbstractionQuery& query) override;
  NodeId propose_region_choice(const OsgSpec& spec, const Osg& graph,
                               const RegionChoiceQuery& query) override;
  NodeId propose_goal_choice(const OsgSpec& spec, const Osg& graph,
                             const GoalChoiceQuery& query) override;

  /// Score used by propose_region_choice for one candidate.
  double region_score(const Osg& graph, const NodeId& candidate, const std::string& goal) const;
  /// Score used by propose_goal_choice; above 1 for a direct label hit.
  double goal_score(const Osg& graph, const NodeId& candidate, const std::string& goal) const;

 private:
  RuleOracleConfig config_;
};

/// Baseline: rule-based mapping judgments, uniformly random region and goal
/// choices from a seeded stream.
class RandomChoiceOracle : public RuleOracle {
 public:
  RandomChoiceOracle(RuleOracleConfig config, std::uint64_t seed)
      : RuleOracle(std::move(config)), rng_(seed) {}

  NodeId propose_region_choice(const OsgSpec& spec, const Osg& graph,
                               const RegionChoiceQuery& query) override;
  NodeId propose_goal_choice(const OsgSpec& spec, const Osg& graph,
                             const GoalChoiceQuery& query) override;

 private:
  NodeId pick(const std::vector<NodeId>& candidates);
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

}  // namespace osg
