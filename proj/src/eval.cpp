#include "osg/eval.hpp"

#include <algorithm>
#include <cstdarg>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace osg {

using json = nlohmann::ordered_json;

namespace {

void require_nonempty(const std::vector<EpisodeResult>& results, const char* what) {
  if (results.empty()) throw std::invalid_argument(std::string(what) + " of an empty result set");
}

}  // namespace

double spl(const std::vector<EpisodeResult>& results) {
  require_nonempty(results, "spl");
  double sum = 0.0;
  for (const auto& r : results) {
    if (!r.success) continue;
    const double longest = std::max(r.path_length, r.shortest_length);
    sum += longest > 0.0 ? r.shortest_length / longest : 1.0;
  }
  return sum / static_cast<double>(results.size());
}

double success_rate(const std::vector<EpisodeResult>& results) {
  require_nonempty(results, "success_rate");
  const auto wins = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.success; });
  return static_cast<double>(wins) / static_cast<double>(results.size());
}

double distance_to_goal(const std::vector<EpisodeResult>& results) {
  require_nonempty(results, "distance_to_goal");
  double sum = 0.0;
  for (const auto& r : results) sum += r.dtg;
  return sum / static_cast<double>(results.size());
}

double PrecisionRecall::precision() const {
  return predicted == 0 ? 0.0 : static_cast<double>(true_positives) / static_cast<double>(predicted);
}

double PrecisionRecall::recall() const {
  return actual == 0 ? 0.0 : static_cast<double>(true_positives) / static_cast<double>(actual);
}

PrecisionRecall GraphQualityReport::nodes_total() const {
  PrecisionRecall total;
  for (const auto& [cls, pr] : nodes) {
    total.true_positives += pr.true_positives;
    total.predicted += pr.predicted;
    total.actual += pr.actual;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Graph quality

GraphQualityReport graph_quality(const Osg& estimated, const SceneWorld& truth, const OsgSpec& spec) {
  bool any_regions = false;
  bool any_provenance = false;
  for (const auto& n : estimated.nodes()) {
    if (n.layer > 3) continue;
    any_regions = true;
    if (!n.provenance.empty()) any_provenance = true;
  }
  if (any_regions && !any_provenance) {
    throw UnsupportedModeError("graph carries no ground-truth provenance; only simulator graphs can be scored");
  }

  const GroundTruth gt = ground_truth(truth, spec);
  GraphQualityReport report;
  for (const auto& [id, cls] : gt.node_class) ++report.nodes[cls].actual;

  // Candidate ground-truth id and its support for every estimated node.
  struct Claim {
    std::size_t node;
    int support;
  };
  std::map<std::string, std::vector<Claim>> claims;
  auto claim = [&](std::size_t i, const std::string& gt_id, int support) {
    const Node& n = estimated.nodes()[i];
    auto it = gt.node_class.find(gt_id);
    if (it == gt.node_class.end() || it->second != n.class_name) return;
    claims[gt_id].push_back({i, support});
  };
  for (std::size_t i = 0; i < estimated.node_count(); ++i) {
    const Node& n = estimated.nodes()[i];
    if (n.layer > 3) continue;
    if (auto id = majority_provenance(n)) claim(i, *id, n.provenance.at(*id));
  }
  auto resolve = [&]() {
    std::map<std::string, std::string> matched;
    for (const auto& [gt_id, list] : claims) {
      const Claim* best = nullptr;
      for (const auto& c : list) {
        if (best == nullptr || c.support > best->support) best = &c;
      }
      matched[estimated.nodes()[best->node].id.value] = gt_id;
    }
    return matched;
  };
  std::map<std::string, std::string> matched = resolve();

  // Abstractions inherit the majority region of their matched places.
  for (std::size_t i = 0; i < estimated.node_count(); ++i) {
    const Node& n = estimated.nodes()[i];
    if (n.layer < 4) continue;
    std::map<std::string, int> votes;
    for (const auto& child : children(estimated, n.id)) {
      auto m = matched.find(child.value);
      if (m == matched.end()) continue;
      auto r = gt.place_region.find(m->second);
      if (r != gt.place_region.end()) ++votes[r->second];
    }
    std::optional<std::string> best;
    int best_votes = 0;
    bool tied = false;
    for (const auto& [region, count] : votes) {
      if (count > best_votes) {
        best = region;
        best_votes = count;
        tied = false;
      } else if (count == best_votes) {
        tied = true;
      }
    }
    if (best && !tied) claim(i, *best, best_votes);
  }
  matched = resolve();
  report.correspondence = matched;

  for (const auto& n : estimated.nodes()) {
    PrecisionRecall& pr = report.nodes[n.class_name];
    ++pr.predicted;
    if (matched.count(n.id.value) != 0) ++pr.true_positives;
  }

  for (const auto& [src, type, dst] : gt.edges) ++report.edges[std::string(to_string(type))].actual;
  for (const auto& e : estimated.edges()) {
    PrecisionRecall& pr = report.edges[std::string(to_string(e.type))];
    ++pr.predicted;
    auto s = matched.find(e.source.value);
    auto t = matched.find(e.target.value);
    if (s == matched.end() || t == matched.end()) continue;
    if (gt.edges.count({s->second, e.type, t->second}) != 0) ++pr.true_positives;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Association

std::size_t AssociationDataset::count_layer(int layer) const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [&](const auto& it) { return it.layer == layer; }));
}

AssociationDataset make_association_dataset(const std::vector<SceneWorld>& worlds,
                                            const OsgSpec& spec, SemanticOracle& oracle,
                                            const SynonymTable& synonyms, const NoiseModel& noise,
                                            const MapperConfig& mapper) {
  AssociationDataset data;
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    const SceneWorld& world = worlds[w];
    for (std::size_t p = 0; p < world.places.size(); ++p) {
      const WorldPlace& place = world.places[p];
      SimAgent agent{place.gt_id};
      ParsedObservation views[2];
      for (int v = 0; v < 2; ++v) {
        const Observation obs = observe(world, agent, noise, synonyms,
                                        mix_seed({noise.seed, world.params.seed, w, p,
                                                  static_cast<std::uint64_t>(v)}));
        views[v] = parse_observation(obs, spec, oracle, mapper);
      }
      AssociationItem place_item;
      place_item.world = w;
      place_item.gt_id = place.gt_id;
      place_item.place_gt = place.gt_id;
      place_item.class_name = place.class_name;
      place_item.truth_label = place.label;
      place_item.layer = 3;
      place_item.first = {NodeId(place.gt_id), views[0].place_label, "", observed_place_features(views[0]).entries};
      place_item.second = {NodeId(), views[1].place_label, "", observed_place_features(views[1]).entries};
      data.items.push_back(std::move(place_item));

      auto index_of = [](const ParsedObservation& parsed) {
        std::map<std::string, std::size_t> out;
        for (std::size_t i = 0; i < parsed.leaves.size(); ++i) {
          if (parsed.leaves[i].provenance.size() == 1) out[parsed.leaves[i].provenance.begin()->first] = i;
        }
        return out;
      };
      const auto first = index_of(views[0]);
      const auto second = index_of(views[1]);
      auto truth_label = [&](const std::string& gt_id) {
        for (const auto& e : place.contents) {
          if (e.gt_id == gt_id) return e.label;
        }
        return world.connector(gt_id).label;
      };
      for (const auto& [gt_id, i] : first) {
        auto j = second.find(gt_id);
        if (j == second.end()) continue;
        const ParsedElement& a = views[0].leaves[i];
        const ParsedElement& b = views[1].leaves[j->second];
        if (a.class_name != b.class_name) continue;
        AssociationItem item;
        item.world = w;
        item.gt_id = gt_id;
        item.place_gt = place.gt_id;
        item.class_name = a.class_name;
        item.truth_label = truth_label(gt_id);
        item.layer = a.layer;
        item.first = {NodeId(gt_id), a.label, a.description, observed_leaf_features(views[0], i, spec)};
        item.second = {NodeId(), b.label, b.description, observed_leaf_features(views[1], j->second, spec)};
        data.items.push_back(std::move(item));
      }
    }
  }
  return data;
}

AssociationAccuracy association_accuracy(const AssociationDataset& dataset, const OsgSpec& spec,
                                         SemanticOracle& oracle) {
  AssociationAccuracy acc;
  auto bucket = [&](const AssociationItem& item) -> AssociationScores& {
    if (item.layer == 3) return acc.places;
    return item.layer == 2 ? acc.connectors : acc.objects;
  };
  auto same_node = [&](const AssociationItem& query, const AssociationItem& stored) {
    if (query.layer == 3) {
      const PlaceRef ref{stored.first.id, stored.first.label};
      if (oracle.similar_places(spec, query.second.label, {ref}).empty()) return false;
      return oracle.place_match(spec, query.class_name, {NodeId(), query.second.features},
                                {stored.first.id, stored.first.features});
    }
    const auto hit = oracle.associate_object(spec, query.second, {stored.first});
    return hit.has_value() && *hit == stored.first.id;
  };

  const auto& items = dataset.items;
  for (const auto& item : items) {
    const bool ok = same_node(item, item);
    bucket(item).recognise.add(ok);
    acc.overall.recognise.add(ok);
  }
  for (std::size_t a = 0; a < items.size(); ++a) {
    for (std::size_t b = 0; b < items.size(); ++b) {
      if (a == b) continue;
      const auto& x = items[a];
      const auto& y = items[b];
      if (x.world != y.world || x.layer != y.layer) continue;
      if (x.layer != 3 && (x.place_gt != y.place_gt || x.class_name != y.class_name)) continue;
      const bool ok = !same_node(x, y);
      const bool same_type = x.truth_label == y.truth_label;
      AssociationScores& s = bucket(x);
      (same_type ? s.distinguish_same_type : s.distinguish_different_type).add(ok);
      (same_type ? acc.overall.distinguish_same_type : acc.overall.distinguish_different_type).add(ok);
    }
  }
  return acc;
}

namespace {

json cell_json(const AccuracyCell& c) {
  return json{{"accuracy", c.value()}, {"correct", c.correct}, {"total", c.total}};
}

json scores_json(const AssociationScores& s) {
  return json{{"recognise", cell_json(s.recognise)},
              {"distinguish_same_type", cell_json(s.distinguish_same_type)},
              {"distinguish_different_type", cell_json(s.distinguish_different_type)}};
}

json pr_json(const PrecisionRecall& pr) {
  json j{{"precision", pr.precision()}, {"recall", pr.recall()}, {"true_positives", pr.true_positives},
         {"predicted", pr.predicted}, {"actual", pr.actual}};
  if (!pr.precision_defined() || !pr.recall_defined()) j["undefined"] = true;
  return j;
}

}  // namespace

std::string association_to_json(const AssociationAccuracy& accuracy) {
  json j{{"places", scores_json(accuracy.places)},
         {"objects", scores_json(accuracy.objects)},
         {"connectors", scores_json(accuracy.connectors)},
         {"overall", scores_json(accuracy.overall)}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Serialization

std::string episode_to_json(const EpisodeResult& r) {
  json trace = json::array();
  for (const auto& s : r.trace) {
    trace.push_back({{"index", s.index}, {"node", s.node}, {"label", s.label}, {"outcome", s.outcome},
                     {"place_gt", s.place_gt}});
  }
  json j{{"goal", r.goal},
         {"start_place", r.start_place},
         {"final_place", r.final_place},
         {"success", r.success},
         {"success_criterion", "final place contains a goal instance"},
         {"path_length", r.path_length},
         {"shortest_length", r.shortest_length},
         {"dtg", r.dtg},
         {"subgoals", r.subgoals},
         {"hops", r.hops},
         {"termination", r.termination},
         {"trace", std::move(trace)}};
  j["graph"] = r.graph_json.empty() ? json(nullptr) : json::parse(r.graph_json);
  return j.dump(2) + "\n";
}

EpisodeResult episode_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EpisodeResult r;
    r.goal = j.at("goal").get<std::string>();
    r.start_place = j.value("start_place", std::string());
    r.final_place = j.value("final_place", std::string());
    r.success = j.at("success").get<bool>();
    r.path_length = j.at("path_length").get<double>();
    r.shortest_length = j.at("shortest_length").get<double>();
    r.dtg = j.at("dtg").get<double>();
    r.subgoals = j.value("subgoals", 0);
    r.hops = j.value("hops", 0);
    r.termination = j.value("termination", std::string());
    if (j.contains("trace")) {
      for (const auto& s : j["trace"]) {
        r.trace.push_back({s.at("index").get<int>(), s.at("node").get<std::string>(),
                           s.value("label", std::string()), s.at("outcome").get<std::string>(),
                           s.value("place_gt", std::string())});
      }
    }
    if (j.contains("graph") && !j["graph"].is_null()) r.graph_json = j["graph"].dump(2) + "\n";
    if (r.path_length < 0.0 || r.shortest_length < 0.0 || r.dtg < 0.0) {
      throw std::runtime_error("episode result has a negative length");
    }
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed episode result: ") + e.what());
  }
}

std::string quality_to_json(const GraphQualityReport& report) {
  json nodes = json::object();
  for (const auto& [cls, pr] : report.nodes) nodes[cls] = pr_json(pr);
  json edges = json::object();
  for (const auto& [type, pr] : report.edges) edges[type] = pr_json(pr);
  json corr = json::object();
  for (const auto& [id, gt] : report.correspondence) corr[id] = gt;
  json j{{"nodes", std::move(nodes)},
         {"nodes_total", pr_json(report.nodes_total())},
         {"edges", std::move(edges)},
         {"correspondence", std::move(corr)}};
  return j.dump(2) + "\n";
}

NavigationSummary summarize(const std::vector<EpisodeResult>& results) {
  NavigationSummary s;
  s.episodes = results.size();
  if (results.empty()) return s;
  s.success_rate = success_rate(results);
  s.spl = spl(results);
  s.dtg = distance_to_goal(results);
  for (const auto& r : results) {
    s.mean_subgoals += r.subgoals;
    s.mean_hops += r.hops;
  }
  s.mean_subgoals /= static_cast<double>(results.size());
  s.mean_hops /= static_cast<double>(results.size());
  return s;
}

std::string summary_to_json(const NavigationSummary& s) {
  json j{{"episodes", s.episodes}, {"success_rate", s.success_rate}, {"spl", s.spl},
         {"dtg", s.dtg},           {"mean_subgoals", s.mean_subgoals}, {"mean_hops", s.mean_hops}};
  return j.dump(2) + "\n";
}

namespace {

std::string row(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

std::string row(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

std::string format_summary_table(const std::map<std::string, NavigationSummary>& rows) {
  std::size_t width = 6;
  for (const auto& [name, s] : rows) width = std::max(width, name.size());
  const int w = static_cast<int>(width);
  std::string out = row("%-*s %8s %7s %7s %8s %9s %7s\n", w, "Method", "Episodes", "SR", "SPL",
                        "DTG (m)", "Subgoals", "Hops");
  for (const auto& [name, s] : rows) {
    out += row("%-*s %8zu %7.3f %7.3f %8.3f %9.2f %7.2f\n", w, name.c_str(), s.episodes, s.success_rate,
               s.spl, s.dtg, s.mean_subgoals, s.mean_hops);
  }
  return out;
}

std::string format_quality_table(const GraphQualityReport& report) {
  std::string out = row("%-14s %-10s %7s %7s %14s\n", "Kind", "Name", "Pr", "Re", "TP/pred/gt");
  auto line = [&](const char* kind, const std::string& name, const PrecisionRecall& pr) {
    const std::string counts = std::to_string(pr.true_positives) + "/" + std::to_string(pr.predicted) +
                               "/" + std::to_string(pr.actual);
    out += row("%-14s %-10s %7.3f %7.3f %14s\n", kind, name.c_str(), pr.precision(), pr.recall(),
               counts.c_str());
  };
  for (const auto& [cls, pr] : report.nodes) line("node", cls, pr);
  for (const auto& [type, pr] : report.edges) line("edge", type, pr);
  return out;
}

}  // namespace osg
