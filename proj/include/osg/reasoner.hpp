#pragma once

// Hierarchical search over an OSG: region proposal from the top layer down to
// Places, goal proposal inside a Place, and shortest-hop pathfinding.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "osg/graph.hpp"
#include "osg/oracle.hpp"
#include "osg/schema.hpp"

namespace osg {

enum class Outcome { Reached, Failed, GoalFound };

std::string_view to_string(Outcome outcome);

struct HistoryEntry {
  NodeId subgoal;
  Outcome outcome;
  std::optional<NodeId> place;  // Place the agent was in when issuing it
};

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchTask {
  std::string goal_text;
  std::vector<HistoryEntry> history;
  std::map<std::string, int> visits;                       // Place id -> visit count
  std::set<std::string> traversed;                         // Connectors crossed
  std::map<std::string, std::set<std::string>> failed;     // Place id -> failed leaves
  std::set<std::string> failed_connectors;

  /// Throws std::invalid_argument on an empty goal.
  explicit SearchTask(std::string goal);

  void note_visit(const NodeId& place) { ++visits[place.value]; }
  int visit_count(const NodeId& place) const;
};

struct Plan {
  /// Places and Connectors from the current Place to the chosen target.
  std::vector<NodeId> region_path;
  NodeId target;
  /// Leaf to approach in the target Place, or the target Connector itself.
  std::optional<NodeId> subgoal;
};

using NodeFilter = std::function<bool(const Node&)>;

/// Shortest path by hop count over connects-to edges (either direction).
/// Among equally short paths the lexicographically smallest NodeId sequence
/// is returned. Nodes rejected by `filter` are not traversed (endpoints are
/// always allowed). nullopt when `to` is unreachable.
std::optional<std::vector<NodeId>> find_path(const Osg& graph, const NodeId& from, const NodeId& to,
                                             const NodeFilter& filter = {});

/// Connector not yet crossed and linked to at most one Place.
bool is_frontier(const Osg& graph, const SearchTask& task, const NodeId& connector);

/// Candidate set offered at the Place level below `region` (all Places when
/// `region` is empty).
std::vector<NodeId> place_level_candidates(const Osg& graph, const SearchTask& task,
                                           const std::optional<NodeId>& region);

NodeId propose_region(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
                      const AgentState& state, SemanticOracle& oracle,
                      const std::set<std::string>& excluded = {});

NodeId propose_goal(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
                    const NodeId& place, SemanticOracle& oracle);

Plan plan_step(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
               const AgentState& state, SemanticOracle& oracle);

void record_outcome(SearchTask& task, const Osg& graph, const NodeId& subgoal, Outcome outcome,
                    const std::optional<NodeId>& place = std::nullopt);

}  // namespace osg
