#pragma once

// Small-graph enumeration and a breadth-first reference for find_path.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "osg/graph.hpp"

namespace osg::test {

/// Undirected graph on at most 8 vertices as neighbour bitmasks.
using SmallGraph = std::vector<std::uint8_t>;

inline std::uint32_t edge_code(const SmallGraph& g, const std::vector<int>& order) {
  std::uint32_t code = 0;
  const int n = static_cast<int>(order.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      code = (code << 1) | ((g[order[i]] >> order[j]) & 1u);
    }
  }
  return code;
}

/// Canonical code: colour refinement, then the smallest edge code over the
/// orderings that keep colour classes in rank order.
inline std::uint32_t canonical_code(const SmallGraph& g) {
  const int n = static_cast<int>(g.size());
  std::vector<int> colour(n, 0);
  for (int round = 0; round < n; ++round) {
    std::vector<std::pair<int, std::vector<int>>> sig(n);
    for (int v = 0; v < n; ++v) {
      sig[v].first = colour[v];
      for (int u = 0; u < n; ++u) {
        if ((g[v] >> u) & 1u) sig[v].second.push_back(colour[u]);
      }
      std::sort(sig[v].second.begin(), sig[v].second.end());
    }
    auto distinct = sig;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<int> next(n);
    for (int v = 0; v < n; ++v) {
      next[v] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), sig[v]) - distinct.begin());
    }
    const bool stable = std::set<int>(next.begin(), next.end()).size() == std::set<int>(colour.begin(), colour.end()).size();
    colour = next;
    if (stable) break;
  }
  std::vector<std::vector<int>> classes(n);
  for (int v = 0; v < n; ++v) classes[colour[v]].push_back(v);
  classes.erase(std::remove_if(classes.begin(), classes.end(), [](const auto& c) { return c.empty(); }),
                classes.end());

  std::uint32_t best = UINT32_MAX;
  std::vector<int> order;
  std::function<void(std::size_t)> walk = [&](std::size_t k) {
    if (k == classes.size()) {
      best = std::min(best, edge_code(g, order));
      return;
    }
    auto members = classes[k];
    do {
      const std::size_t mark = order.size();
      order.insert(order.end(), members.begin(), members.end());
      walk(k + 1);
      order.resize(mark);
    } while (std::next_permutation(members.begin(), members.end()));
  };
  walk(0);
  return best;
}

inline bool is_connected(const SmallGraph& g) {
  if (g.empty()) return false;
  std::uint32_t seen = 1, frontier = 1;
  while (frontier != 0) {
    std::uint32_t next = 0;
    for (std::size_t v = 0; v < g.size(); ++v) {
      if ((frontier >> v) & 1u) next |= g[v];
    }
    frontier = next & ~seen;
    seen |= next;
  }
  return seen == (1u << g.size()) - 1;
}

/// One representative per isomorphism class of connected graphs on n
/// vertices (n <= 8). Every connected graph has a vertex whose removal keeps
/// it connected, so extending the (n-1)-vertex classes reaches all of them.
inline const std::vector<SmallGraph>& connected_graphs(int n) {
  static std::map<int, std::vector<SmallGraph>> cache;
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  std::vector<SmallGraph> out;
  if (n == 1) {
    out.push_back(SmallGraph{0});
  } else {
    std::set<std::uint32_t> codes;
    for (const auto& base : connected_graphs(n - 1)) {
      for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
        SmallGraph g = base;
        g.push_back(static_cast<std::uint8_t>(mask));
        for (int v = 0; v < n - 1; ++v) {
          if ((mask >> v) & 1u) g[v] |= static_cast<std::uint8_t>(1u << (n - 1));
        }
        if (codes.insert(canonical_code(g)).second) out.push_back(g);
      }
    }
  }
  return cache.emplace(n, std::move(out)).first->second;
}

/// Region graph: one room per vertex, labelled `labels[v]`, connects-to edges
/// in a direction chosen by `flip`.
inline Osg region_graph(std::shared_ptr<const OsgSpec> spec, const SmallGraph& g,
                        const std::vector<std::string>& labels, std::mt19937_64& flip) {
  Osg graph(std::move(spec));
  std::vector<NodeId> ids;
  for (std::size_t v = 0; v < g.size(); ++v) ids.push_back(graph.add_node("room", labels[v]));
  for (std::size_t a = 0; a < g.size(); ++a) {
    for (std::size_t b = a + 1; b < g.size(); ++b) {
      if (!((g[a] >> b) & 1u)) continue;
      if (flip() & 1u) {
        graph.add_edge(ids[b], EdgeType::ConnectsTo, ids[a]);
      } else {
        graph.add_edge(ids[a], EdgeType::ConnectsTo, ids[b]);
      }
    }
  }
  return graph;
}

/// Reference answer: every shortest connects-to path enumerated outright,
/// the lexicographically smallest NodeId sequence returned.
inline std::optional<std::vector<NodeId>> reference_path(const Osg& graph, const NodeId& from,
                                                         const NodeId& to) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (const auto& e : graph.edges()) {
    if (e.type != EdgeType::ConnectsTo || e.source == e.target) continue;
    adj[e.source].insert(e.target);
    adj[e.target].insert(e.source);
  }
  auto sweep = [&](const NodeId& origin) {
    std::map<NodeId, int> dist{{origin, 0}};
    std::deque<NodeId> queue{origin};
    while (!queue.empty()) {
      const NodeId cur = queue.front();
      queue.pop_front();
      for (const auto& next : adj[cur]) {
        if (dist.emplace(next, dist[cur] + 1).second) queue.push_back(next);
      }
    }
    return dist;
  };
  auto dist = sweep(from);
  auto remaining = sweep(to);
  if (dist.count(to) == 0) return std::nullopt;
  std::optional<std::vector<NodeId>> best;
  std::vector<NodeId> path{from};
  std::function<void(const NodeId&)> extend = [&](const NodeId& cur) {
    if (cur == to) {
      if (!best || path < *best) best = path;
      return;
    }
    for (const auto& next : adj[cur]) {
      if (dist[next] == dist[cur] + 1 && remaining[next] == remaining[cur] - 1) {
        path.push_back(next);
        extend(next);
        path.pop_back();
      }
    }
  };
  extend(from);
  return best;
}

/// Random names so that lexicographic order differs from insertion order.
inline std::vector<std::string> shuffled_labels(std::size_t n, std::mt19937_64& rng) {
  static const char* pool[] = {"attic", "bath", "cellar", "den", "entry", "foyer", "garage", "hall",
                               "kitchen", "library", "lounge", "nook", "office", "pantry", "study", "yard"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng() % 16]);
  return out;
}

/// Random region graph of rooms and entrances: a random spanning tree over
/// legal pairs plus `extra` chords, so it is connected.
inline Osg random_region_graph(std::shared_ptr<const OsgSpec> spec, std::size_t n, std::size_t extra,
                               std::mt19937_64& rng) {
  Osg graph(std::move(spec));
  const auto labels = shuffled_labels(n, rng);
  std::vector<NodeId> ids;
  for (std::size_t v = 0; v < n; ++v) {
    const bool entrance = v > 0 && rng() % 3 == 0;
    ids.push_back(graph.add_node(entrance ? "entrance" : "room", entrance ? "door" : labels[v]));
  }
  auto is_room = [&](std::size_t v) { return graph.node(ids[v]).class_name == "room"; };
  auto link = [&](std::size_t a, std::size_t b) {
    if (rng() & 1u) std::swap(a, b);
    graph.add_edge(ids[a], EdgeType::ConnectsTo, ids[b]);
  };
  std::vector<std::size_t> rooms{0};
  for (std::size_t v = 1; v < n; ++v) {
    // Entrances only attach to rooms; rooms attach to anything already placed.
    const std::size_t u = is_room(v) ? rng() % v : rooms[rng() % rooms.size()];
    link(u, v);
    if (is_room(v)) rooms.push_back(v);
  }
  for (std::size_t k = 0; k < extra; ++k) {
    const std::size_t a = rng() % n, b = rng() % n;
    if (a == b || (!is_room(a) && !is_room(b))) continue;
    link(a, b);
  }
  return graph;
}

}  // namespace osg::test
