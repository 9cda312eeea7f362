#include "osg/reasoner.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <limits>

namespace osg {

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Reached: return "reached";
    case Outcome::Failed: return "failed";
    case Outcome::GoalFound: return "goal_found";
  }
  return "reached";
}

SearchTask::SearchTask(std::string goal) : goal_text(std::move(goal)) {
  if (goal_text.empty()) throw std::invalid_argument("search goal must be non-empty");
}

int SearchTask::visit_count(const NodeId& place) const {
  auto it = visits.find(place.value);
  return it == visits.end() ? 0 : it->second;
}

std::optional<std::vector<NodeId>> find_path(const Osg& graph, const NodeId& from, const NodeId& to,
                                             const NodeFilter& filter) {
  if (!graph.has_node(from) || !graph.has_node(to)) return std::nullopt;
  const std::size_t n = graph.node_count();
  auto allowed = [&](std::size_t i) {
    const Node& node = graph.nodes()[i];
    return !filter || node.id == from || node.id == to || filter(node);
  };
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    const NodeId& id = graph.nodes()[i].id;
    for (std::size_t e : graph.incident_edges(id)) {
      const Edge& edge = graph.edges()[e];
      if (edge.type != EdgeType::ConnectsTo) continue;
      const std::size_t j = graph.index_of(edge.source == id ? edge.target : edge.source);
      if (j != i && allowed(j)) out.push_back(j);
    }
    return out;
  };

  // Uniform weights: Dijkstra reduces to a breadth-first sweep from the target.
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(n, kUnreached);
  const std::size_t target = graph.index_of(to);
  const std::size_t source = graph.index_of(from);
  std::deque<std::size_t> queue{target};
  dist[target] = 0;
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    for (std::size_t next : neighbours(cur)) {
      if (dist[next] == kUnreached) {
        dist[next] = dist[cur] + 1;
        queue.push_back(next);
      }
    }
  }
  if (dist[source] == kUnreached) return std::nullopt;

  std::vector<NodeId> path{from};
  std::size_t cur = source;
  while (cur != target) {
    std::optional<std::size_t> best;
    for (std::size_t next : neighbours(cur)) {
      if (dist[next] != dist[cur] - 1) continue;
      if (!best || graph.nodes()[next].id < graph.nodes()[*best].id) best = next;
    }
    cur = *best;
    path.push_back(graph.nodes()[cur].id);
  }
  return path;
}

bool is_frontier(const Osg& graph, const SearchTask& task, const NodeId& connector) {
  if (graph.node(connector).layer != 2) return false;
  if (task.traversed.count(connector.value) != 0) return false;
  if (task.failed_connectors.count(connector.value) != 0) return false;
  int places = 0;
  for (const auto& r : connected_regions(graph, connector)) {
    if (graph.node(r).is_place()) ++places;
  }
  return places <= 1;
}

namespace {

std::vector<NodeId> descendant_places(const Osg& graph, const NodeId& region) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{region};
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    if (graph.node(cur).is_place()) {
      out.push_back(cur);
      continue;
    }
    auto kids = children(graph, cur);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<NodeId> place_pool(const Osg& graph, const std::optional<NodeId>& region) {
  if (region) return descendant_places(graph, *region);
  return nodes_of_layer(graph, 3);
}

std::string layer_classes(const OsgSpec& spec, int layer) {
  std::string out;
  for (const auto* c : spec.classes_at_layer(layer)) {
    if (!out.empty()) out += "/";
    out += c->name;
  }
  return out;
}

bool contains_id(const std::vector<NodeId>& list, const NodeId& id) {
  return std::find(list.begin(), list.end(), id) != list.end();
}

template <typename Ask>
NodeId choose_with_retry(const std::vector<NodeId>& candidates, Ask ask) {
  NodeId first = ask(false);
  if (contains_id(candidates, first)) return first;
  NodeId second = ask(true);
  if (contains_id(candidates, second)) return second;
  throw OracleError(OracleError::Kind::InvalidChoice,
                    "oracle chose '" + second.value + "', which is not among the candidates");
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::vector<NodeId> place_level_candidates(const Osg& graph, const SearchTask& task,
                                           const std::optional<NodeId>& region) {
  const std::vector<NodeId> pool = place_pool(graph, region);
  std::vector<NodeId> out;
  for (const auto& p : pool) {
    if (task.visit_count(p) == 0) out.push_back(p);
  }
  for (const auto& p : pool) {
    for (const auto& leaf : place_leaves(graph, p)) {
      if (is_frontier(graph, task, leaf) && !contains_id(out, leaf)) out.push_back(leaf);
    }
  }
  if (!out.empty() || pool.empty()) return out;
  int least = std::numeric_limits<int>::max();
  for (const auto& p : pool) least = std::min(least, task.visit_count(p));
  for (const auto& p : pool) {
    if (task.visit_count(p) == least) out.push_back(p);
  }
  return out;
}

NodeId propose_region(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
                      const AgentState& state, SemanticOracle& oracle,
                      const std::set<std::string>& excluded) {
  (void)state;
  if (nodes_of_layer(graph, 3).empty()) throw PlanError("graph has no Places to search");
  auto keep = [&](std::vector<NodeId> list) {
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](const NodeId& id) { return excluded.count(id.value) != 0; }),
               list.end());
    return list;
  };

  std::vector<int> layers = spec.declared_layers();
  std::optional<NodeId> chosen;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    const int layer = *it;
    if (layer < 4) break;
    std::vector<NodeId> subset;
    if (!chosen) {
      subset = nodes_of_layer(graph, layer);
    } else {
      for (const auto& c : children(graph, *chosen)) {
        if (graph.node(c).layer == layer) subset.push_back(c);
      }
    }
    if (subset.empty()) continue;
    // Prefer regions with something left to explore, then the regions
    // holding the least-visited places.
    std::vector<NodeId> fresh;
    std::vector<std::pair<int, NodeId>> revisit;
    for (const auto& s : subset) {
      const auto below = keep(place_level_candidates(graph, task, s));
      if (below.empty()) continue;
      int least = std::numeric_limits<int>::max();
      for (const auto& c : below) {
        least = std::min(least, graph.node(c).layer == 2 ? 0 : task.visit_count(c));
      }
      if (least == 0) {
        fresh.push_back(s);
      } else {
        revisit.emplace_back(least, s);
      }
    }
    std::vector<NodeId> candidates = fresh;
    if (candidates.empty() && !revisit.empty()) {
      const int least = std::min_element(revisit.begin(), revisit.end())->first;
      for (const auto& [count, s] : revisit) {
        if (count == least) candidates.push_back(s);
      }
    }
    if (candidates.empty()) candidates = subset;
    if (candidates.size() == 1) {
      chosen = candidates.front();
      continue;
    }
    const RegionChoiceQuery base{layer_classes(spec, layer), task.goal_text, candidates, false};
    chosen = choose_with_retry(candidates, [&](bool restate) {
      RegionChoiceQuery q = base;
      q.restate = restate;
      return oracle.propose_region_choice(spec, graph, q);
    });
  }

  const std::vector<NodeId> candidates = keep(place_level_candidates(graph, task, chosen));
  if (candidates.empty()) throw PlanError("no reachable region left to propose");
  if (candidates.size() == 1) return candidates.front();
  const RegionChoiceQuery base{layer_classes(spec, 3), task.goal_text, candidates, false};
  return choose_with_retry(candidates, [&](bool restate) {
    RegionChoiceQuery q = base;
    q.restate = restate;
    return oracle.propose_region_choice(spec, graph, q);
  });
}

NodeId propose_goal(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
                    const NodeId& place, SemanticOracle& oracle) {
  std::vector<NodeId> leaves;
  const auto failed = task.failed.find(place.value);
  for (const auto& leaf : place_leaves(graph, place)) {
    if (failed != task.failed.end() && failed->second.count(leaf.value) != 0) continue;
    leaves.push_back(leaf);
  }
  if (leaves.empty()) throw PlanError("place '" + place.value + "' has no leaf to approach");
  const std::string goal = lower(task.goal_text);
  for (const auto& leaf : leaves) {
    if (lower(graph.node(leaf).label) == goal) return leaf;
  }
  if (leaves.size() == 1) return leaves.front();
  const GoalChoiceQuery base{task.goal_text, leaves, false};
  return choose_with_retry(leaves, [&](bool restate) {
    GoalChoiceQuery q = base;
    q.restate = restate;
    return oracle.propose_goal_choice(spec, graph, q);
  });
}

Plan plan_step(const OsgSpec& spec, const Osg& graph, const SearchTask& task,
               const AgentState& state, SemanticOracle& oracle) {
  if (!state.current_place || !graph.has_node(*state.current_place)) {
    throw PlanError("agent is not localised in the graph");
  }
  // Connectors that already failed are not routed through again.
  const NodeFilter walkable = [&task](const Node& n) {
    if (n.layer == 2) return task.failed_connectors.count(n.id.value) == 0;
    return n.layer == 3;
  };
  std::set<std::string> excluded;
  while (true) {
    const NodeId target = propose_region(spec, graph, task, state, oracle, excluded);
    auto path = find_path(graph, *state.current_place, target, walkable);
    if (!path) {
      // Unreachable in the current graph: replan without it.
      excluded.insert(target.value);
      continue;
    }
    Plan plan;
    plan.region_path = std::move(*path);
    plan.target = target;
    const Node& t = graph.node(target);
    if (t.layer == 2) {
      plan.subgoal = target;
    } else if (t.is_place()) {
      try {
        plan.subgoal = propose_goal(spec, graph, task, target, oracle);
      } catch (const PlanError&) {
        plan.subgoal.reset();
      }
    }
    return plan;
  }
}

void record_outcome(SearchTask& task, const Osg& graph, const NodeId& subgoal, Outcome outcome,
                    const std::optional<NodeId>& place) {
  task.history.push_back({subgoal, outcome, place});
  const bool connector = graph.has_node(subgoal) && graph.node(subgoal).layer == 2;
  if (outcome == Outcome::Failed) {
    if (place) task.failed[place->value].insert(subgoal.value);
    if (connector) task.failed_connectors.insert(subgoal.value);
  } else if (outcome == Outcome::Reached && connector) {
    task.traversed.insert(subgoal.value);
  }
}

}  // namespace osg
