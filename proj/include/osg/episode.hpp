#pragma once

#include <string>
#include <vector>

namespace osg {

/// One subgoal handed to the motion layer during an episode.
struct SubgoalRecord {
  int index = 0;
  std::string node;      // graph node id of the subgoal
  std::string label;
  std::string outcome;   // "reached", "failed" or "goal_found"
  std::string place_gt;  // ground-truth place after the move
};

/// Outcome of one navigation episode. Success is topological: the agent's
/// final place contains an instance of the goal.
struct EpisodeResult {
  std::string goal;
  std::string start_place;
  std::string final_place;
  bool success = false;
  double path_length = 0.0;      // metres driven
  double shortest_length = 0.0;  // metres from start to the nearest goal place
  double dtg = 0.0;              // metres from final place to the nearest goal place
  int subgoals = 0;
  int hops = 0;                  // motion calls
  std::string termination;       // goal_found, budget, exhausted, oracle_invalid
  std::vector<SubgoalRecord> trace;
  std::string graph_json;        // final graph snapshot, serialize_graph() output
};

}  // namespace osg
