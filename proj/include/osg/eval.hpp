#pragma once

// Navigation metrics, graph precision/recall against simulator ground truth,
// and two-view association accuracy.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "osg/episode.hpp"
#include "osg/graph.hpp"
#include "osg/mapper.hpp"
#include "osg/oracle.hpp"
#include "osg/sim.hpp"

namespace osg {

/// Mean of S * l / max(p, l); a success with p = l = 0 scores 1.
/// Throws std::invalid_argument on an empty list.
double spl(const std::vector<EpisodeResult>& results);
double success_rate(const std::vector<EpisodeResult>& results);
/// Mean distance to goal in metres.
double distance_to_goal(const std::vector<EpisodeResult>& results);

struct PrecisionRecall {
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;

  /// 0 when nothing was predicted; see precision_defined().
  double precision() const;
  double recall() const;
  bool precision_defined() const { return predicted > 0; }
  bool recall_defined() const { return actual > 0; }
};

struct GraphQualityReport {
  std::map<std::string, PrecisionRecall> nodes;  // per class
  std::map<std::string, PrecisionRecall> edges;  // per edge type name
  std::map<std::string, std::string> correspondence;  // node id -> gt id

  /// All node classes pooled.
  PrecisionRecall nodes_total() const;
};

/// Graphs built outside the simulator carry no provenance and cannot be scored.
class UnsupportedModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GraphQualityReport graph_quality(const Osg& estimated, const SceneWorld& truth, const OsgSpec& spec);

/// One entity seen twice under independent noise.
struct AssociationItem {
  std::size_t world = 0;
  std::string gt_id;
  std::string place_gt;
  std::string class_name;
  std::string truth_label;  // noiseless label
  int layer = 1;
  LeafView first;
  LeafView second;
};

struct AssociationDataset {
  std::vector<AssociationItem> items;

  std::size_t count_layer(int layer) const;
};

/// Every place of every world observed twice; items cover the places and the
/// leaves visible in both views.
AssociationDataset make_association_dataset(const std::vector<SceneWorld>& worlds,
                                            const OsgSpec& spec, SemanticOracle& oracle,
                                            const SynonymTable& synonyms, const NoiseModel& noise,
                                            const MapperConfig& mapper = {});

struct AccuracyCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
  void add(bool ok) {
    ++total;
    if (ok) ++correct;
  }
};

struct AssociationScores {
  AccuracyCell recognise;
  AccuracyCell distinguish_same_type;
  AccuracyCell distinguish_different_type;
};

struct AssociationAccuracy {
  AssociationScores places;
  AssociationScores objects;
  AssociationScores connectors;
  AssociationScores overall;
};

/// recognise: an entity's two views judged the same node. distinguish:
/// views of two different entities (same place for leaves, same world for
/// places) judged different, split by whether their true labels agree.
AssociationAccuracy association_accuracy(const AssociationDataset& dataset, const OsgSpec& spec,
                                         SemanticOracle& oracle);
std::string association_to_json(const AssociationAccuracy& accuracy);

std::string episode_to_json(const EpisodeResult& result);
/// Throws std::runtime_error on malformed input.
EpisodeResult episode_from_json(const std::string& text);

std::string quality_to_json(const GraphQualityReport& report);

/// Aggregate over a batch of episodes.
struct NavigationSummary {
  std::size_t episodes = 0;
  double success_rate = 0.0;
  double spl = 0.0;
  double dtg = 0.0;
  double mean_subgoals = 0.0;
  double mean_hops = 0.0;
};

NavigationSummary summarize(const std::vector<EpisodeResult>& results);
std::string summary_to_json(const NavigationSummary& summary);
/// Aligned plain-text tables.
std::string format_summary_table(const std::map<std::string, NavigationSummary>& rows);
std::string format_quality_table(const GraphQualityReport& report);

}  // namespace osg
