#include "osg/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

namespace osg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Synonyms

SynonymTable::SynonymTable(const std::vector<std::vector<std::string>>& groups) {
  // Union groups sharing a label so the relation is transitive.
  for (const auto& group : groups) {
    std::set<std::size_t> hits;
    for (const auto& label : group) {
      auto it = group_index_.find(label);
      if (it != group_index_.end()) hits.insert(it->second);
    }
    std::vector<std::string> merged;
    for (std::size_t h : hits) {
      merged.insert(merged.end(), groups_[h].begin(), groups_[h].end());
    }
    for (const auto& label : group) {
      if (std::find(merged.begin(), merged.end(), label) == merged.end()) merged.push_back(label);
    }
    std::vector<std::vector<std::string>> kept;
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      if (hits.count(i) == 0) kept.push_back(std::move(groups_[i]));
    }
    // The merged group takes the slot of the earliest group it absorbed.
    std::size_t slot = hits.empty() ? kept.size() : *hits.begin();
    std::size_t removed_before = 0;
    for (std::size_t h : hits) {
      if (h < slot) ++removed_before;
    }
    kept.insert(kept.begin() + static_cast<std::ptrdiff_t>(slot - removed_before), std::move(merged));
    groups_ = std::move(kept);
    group_index_.clear();
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      for (const auto& label : groups_[i]) group_index_.emplace(label, i);
    }
  }
}

std::string SynonymTable::canonical(const std::string& label) const {
  auto it = group_index_.find(label);
  return it == group_index_.end() ? label : groups_[it->second].front();
}

std::vector<std::string> SynonymTable::group_of(const std::string& label) const {
  auto it = group_index_.find(label);
  if (it == group_index_.end()) return {label};
  return groups_[it->second];
}

// ---------------------------------------------------------------------------
// Config

double RuleOracleConfig::weight(const std::string& evidence, const std::string& goal) const {
  const std::string a = synonyms.canonical(evidence);
  const std::string g = synonyms.canonical(goal);
  if (a == g) return 1.0;
  if (auto it = cooccurrence.find({a, g}); it != cooccurrence.end()) return it->second;
  if (auto it = cooccurrence.find({g, a}); it != cooccurrence.end()) return it->second;
  return 0.0;
}

RuleOracleConfig RuleOracleConfig::from_json(const std::string& text) {
  auto fail = [](const std::string& what) {
    return OracleError(OracleError::Kind::Config, "rule oracle config: " + what);
  };
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw fail(e.what());
  }
  if (!doc.is_object()) throw fail("expected a JSON object");

  RuleOracleConfig cfg;
  try {
    cfg.feature_match_threshold = doc.value("feature_match_threshold", 0.5);
    if (cfg.feature_match_threshold < 0.0 || cfg.feature_match_threshold > 1.0) {
      throw fail("feature_match_threshold must lie in [0,1]");
    }
    if (doc.contains("synonyms")) {
      cfg.synonyms = SynonymTable(doc["synonyms"].get<std::vector<std::vector<std::string>>>());
    }
    if (doc.contains("discard_labels")) {
      cfg.discard_labels = doc["discard_labels"].get<std::vector<std::string>>();
    }
    if (doc.contains("connector_labels")) {
      cfg.connector_labels =
          doc["connector_labels"].get<std::map<std::string, std::vector<std::string>>>();
    }
    if (doc.contains("abstraction_labels")) {
      cfg.abstraction_labels = doc["abstraction_labels"].get<std::map<std::string, std::string>>();
    }
    if (doc.contains("cooccurrence")) {
      for (const auto& row : doc["cooccurrence"]) {
        if (!row.is_array() || row.size() != 3) throw fail("cooccurrence rows are [a, b, weight]");
        const double w = row[2].get<double>();
        if (w < 0.0 || w > 1.0) throw fail("weight out of [0,1] for " + row.dump());
        cfg.cooccurrence[{cfg.synonyms.canonical(row[0].get<std::string>()),
                          cfg.synonyms.canonical(row[1].get<std::string>())}] = w;
      }
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  return cfg;
}

RuleOracleConfig RuleOracleConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw OracleError(OracleError::Kind::Config, "cannot open rule oracle config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

// ---------------------------------------------------------------------------
// Similarity

std::vector<std::string> description_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double description_similarity(const std::string& a, const std::string& b) {
  auto ta = description_tokens(a);
  auto tb = description_tokens(b);
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

namespace {

bool entries_match(const FeatureEntry& a, const FeatureEntry& b, const SynonymTable& synonyms) {
  if (!synonyms.equivalent(a.label, b.label)) return false;
  auto ta = description_tokens(a.description);
  auto tb = description_tokens(b.description);
  if (ta.empty() || tb.empty()) return true;
  for (const auto& t : ta) {
    if (std::find(tb.begin(), tb.end(), t) != tb.end()) return true;
  }
  return false;
}

}  // namespace

double feature_similarity(const std::vector<FeatureEntry>& a, const std::vector<FeatureEntry>& b,
                          const SynonymTable& synonyms) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::vector<std::size_t>> adj(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (entries_match(a[i], b[j], synonyms)) adj[i].push_back(j);
    }
  }
  // Kuhn's augmenting paths; lists are small.
  std::vector<int> owner(b.size(), -1);
  std::function<bool(std::size_t, std::vector<char>&)> augment = [&](std::size_t i,
                                                                     std::vector<char>& seen) {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), seen)) {
        owner[j] = static_cast<int>(i);
        return true;
      }
    }
    return false;
  };
  std::size_t matched = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<char> seen(b.size(), 0);
    if (augment(i, seen)) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(a.size() + b.size() - matched);
}

std::string strip_index(const std::string& name) {
  const auto pos = name.find_last_of('_');
  if (pos == std::string::npos || pos + 1 == name.size()) return name;
  for (std::size_t i = pos + 1; i < name.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return name;
  }
  return name.substr(0, pos);
}

// ---------------------------------------------------------------------------
// RuleOracle

std::vector<std::optional<std::string>> RuleOracle::classify_elements(
    const OsgSpec& spec, const std::string& place_class, const std::vector<SceneElement>& elements) {
  std::set<std::string> discard;
  for (const auto& d : config_.discard_labels) discard.insert(config_.synonyms.canonical(d));
  const ClassSpec* object_cls = spec.object_class();
  const std::string object_name = object_cls != nullptr ? object_cls->name : "object";

  auto connector_class = [&](const std::string& label) -> std::optional<std::string> {
    if (const ClassSpec* c = spec.find(label); c != nullptr && c->layer_id == 2) return c->name;
    for (const auto& alias : config_.synonyms.group_of(label)) {
      auto it = config_.connector_labels.find(alias);
      if (it == config_.connector_labels.end()) continue;
      for (const auto& cls : it->second) {
        if (const ClassSpec* c = spec.find(cls); c != nullptr && c->layer_id == 2) return c->name;
      }
    }
    return std::nullopt;
  };

  std::vector<std::optional<std::string>> out;
  bool place_seen = false;
  for (const auto& el : elements) {
    const std::string label = el.label.empty() ? strip_index(el.name) : el.label;
    const bool place_slot = !place_seen && el.name.size() >= 2 &&
                            el.name.compare(el.name.size() - 2, 2, "_0") == 0;
    if (place_slot) {
      place_seen = true;
      out.emplace_back(place_class);
    } else if (discard.count(config_.synonyms.canonical(label)) != 0) {
      out.emplace_back(std::nullopt);
    } else if (auto cls = connector_class(label)) {
      out.emplace_back(std::move(cls));
    } else {
      out.emplace_back(object_name);
    }
  }
  return out;
}

std::vector<NodeId> RuleOracle::similar_places(const OsgSpec&, const std::string& label,
                                               const std::vector<PlaceRef>& places) {
  std::vector<NodeId> out;
  for (const auto& p : places) {
    if (config_.synonyms.equivalent(p.label, label)) out.push_back(p.id);
  }
  return out;
}

bool RuleOracle::place_match(const OsgSpec&, const std::string&, const ObjectFeatures& observed,
                             const ObjectFeatures& stored) {
  return feature_similarity(observed.entries, stored.entries, config_.synonyms) >=
         config_.feature_match_threshold;
}

namespace {

/// A leaf's own appearance counts as one of its features, so a re-sighting
/// whose neighbours all dropped out can still match.
std::vector<FeatureEntry> with_self(const LeafView& leaf) {
  std::vector<FeatureEntry> out{{leaf.id, leaf.label, leaf.description}};
  out.insert(out.end(), leaf.features.begin(), leaf.features.end());
  return out;
}

}  // namespace

std::optional<NodeId> RuleOracle::associate_object(const OsgSpec&, const LeafView& query,
                                                   const std::vector<LeafView>& candidates) {
  const LeafView* best = nullptr;
  double best_j = -1.0;
  double best_d = -1.0;
  for (const auto& c : candidates) {
    if (!config_.synonyms.equivalent(c.label, query.label)) continue;
    const double j = feature_similarity(with_self(query), with_self(c), config_.synonyms);
    if (j < config_.feature_match_threshold) continue;
    const double d = description_similarity(query.description, c.description);
    const bool better = best == nullptr || j > best_j || (j == best_j && d > best_d) ||
                        (j == best_j && d == best_d && c.id < best->id);
    if (better) {
      best = &c;
      best_j = j;
      best_d = d;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

AbstractionAnswer RuleOracle::infer_abstract_region(const OsgSpec&, const AbstractionQuery& query) {
  std::optional<std::string> mapped;
  for (const auto& alias : config_.synonyms.group_of(query.place_label)) {
    auto it = config_.abstraction_labels.find(alias);
    if (it != config_.abstraction_labels.end()) {
      mapped = it->second;
      break;
    }
  }
  if (mapped) {
    for (const auto& e : query.existing) {
      if (config_.synonyms.equivalent(e.label, *mapped)) return {e.id, {}};
    }
    return {std::nullopt, *mapped};
  }
  if (query.previous_parent) {
    for (const auto& e : query.existing) {
      if (e.id == query.previous_parent->id) return {e.id, {}};
    }
  }
  return {std::nullopt, query.abstraction_class};
}

double RuleOracle::region_score(const Osg& graph, const NodeId& candidate,
                                const std::string& goal) const {
  const Node& n = graph.node(candidate);
  if (n.layer == 2) {
    double best = 0.0;
    for (const auto& near : graph.out_neighbors(candidate, EdgeType::IsNear)) {
      best = std::max(best, config_.weight(graph.node(near).label, goal));
    }
    return best;
  }
  if (n.is_place()) return config_.weight(n.label, goal);
  // Abstraction: mapped places were already looked at, so only connectors
  // still open on one side carry evidence.
  double best = 0.0;
  std::vector<NodeId> stack{candidate};
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    const Node& c = graph.node(cur);
    if (c.is_place()) {
      for (const auto& leaf : place_leaves(graph, cur)) {
        if (graph.node(leaf).layer != 2) continue;
        int sides = 0;
        for (const auto& r : connected_regions(graph, leaf)) {
          if (graph.node(r).is_place()) ++sides;
        }
        if (sides <= 1) best = std::max(best, region_score(graph, leaf, goal));
      }
    } else if (c.is_abstraction()) {
      for (const auto& child : children(graph, cur)) stack.push_back(child);
    }
  }
  return best;
}

double RuleOracle::goal_score(const Osg& graph, const NodeId& candidate,
                              const std::string& goal) const {
  const Node& n = graph.node(candidate);
  if (config_.synonyms.equivalent(n.label, goal)) return 2.0;
  return config_.weight(n.label, goal);
}

namespace {

template <typename Score>
NodeId argmax_lexicographic(const std::vector<NodeId>& candidates, Score score) {
  if (candidates.empty()) throw OracleError(OracleError::Kind::InvalidChoice, "no candidates");
  std::optional<NodeId> best;
  double best_score = 0.0;
  for (const auto& c : candidates) {
    const double s = score(c);
    if (!best || s > best_score || (s == best_score && c < *best)) {
      best = c;
      best_score = s;
    }
  }
  return *best;
}

}  // namespace

NodeId RuleOracle::propose_region_choice(const OsgSpec&, const Osg& graph,
                                         const RegionChoiceQuery& query) {
  return argmax_lexicographic(query.candidates,
                              [&](const NodeId& c) { return region_score(graph, c, query.goal); });
}

NodeId RuleOracle::propose_goal_choice(const OsgSpec&, const Osg& graph,
                                       const GoalChoiceQuery& query) {
  return argmax_lexicographic(query.candidates,
                              [&](const NodeId& c) { return goal_score(graph, c, query.goal); });
}

// ---------------------------------------------------------------------------
// RandomChoiceOracle

NodeId RandomChoiceOracle::pick(const std::vector<NodeId>& candidates) {
  if (candidates.empty()) throw OracleError(OracleError::Kind::InvalidChoice, "no candidates");
  std::lock_guard<std::mutex> lock(mutex_);
  return candidates[rng_() % candidates.size()];
}

NodeId RandomChoiceOracle::propose_region_choice(const OsgSpec&, const Osg&,
                                                 const RegionChoiceQuery& query) {
  return pick(query.candidates);
}

NodeId RandomChoiceOracle::propose_goal_choice(const OsgSpec&, const Osg& graph,
                                               const GoalChoiceQuery& query) {
  // A leaf that is the goal itself is taken directly by the reasoner before
  // this call; here every candidate is equally likely.
  (void)graph;
  return pick(query.candidates);
}

}  // namespace osg
