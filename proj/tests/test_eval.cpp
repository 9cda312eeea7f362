#include <random>

#include "doctest.h"
#include "json.hpp"
#include "osg/eval.hpp"
#include "support.hpp"

using namespace osg;
using nlohmann::json;

namespace {

EpisodeResult episode(bool success, double p, double l, double dtg = 0.0) {
  EpisodeResult r;
  r.goal = "bed";
  r.success = success;
  r.path_length = p;
  r.shortest_length = l;
  r.dtg = dtg;
  return r;
}

Osg noiseless_map(const SceneWorld& world) {
  RuleOracle oracle(osg::test::rule_config());
  return map_full_coverage(world, osg::test::homes(), oracle, osg::test::rule_config().synonyms, MapperConfig{},
                           NoiseModel{});
}

}  // namespace

TEST_CASE("navigation metric examples") {
  CHECK(spl({episode(true, 4, 4)}) == 1.0);
  CHECK(spl({episode(false, 4, 4)}) == 0.0);
  CHECK(spl({episode(true, 10, 5)}) == 0.5);
  CHECK(spl({episode(true, 0, 0)}) == 1.0);
  const std::vector<EpisodeResult> mixed{episode(true, 1, 1), episode(true, 1, 1), episode(true, 1, 1),
                                         episode(false, 1, 1, 2.0)};
  CHECK(success_rate(mixed) == 0.75);
  CHECK(distance_to_goal(mixed) == 0.5);
  CHECK(success_rate({episode(true, 1, 1), episode(true, 3, 2)}) == 1.0);
  CHECK_THROWS_AS(spl({}), std::invalid_argument);
  CHECK_THROWS_AS(success_rate({}), std::invalid_argument);
  CHECK_THROWS_AS(distance_to_goal({}), std::invalid_argument);
}

TEST_CASE("metrics fixture") {
  const json cases = json::parse(osg::test::slurp(osg::test::source_path("tests/data/metrics_fixture.json")));
  REQUIRE(cases.size() == 12);
  for (const auto& c : cases) {
    CAPTURE(c.at("name").get<std::string>());
    std::vector<EpisodeResult> results;
    for (const auto& e : c.at("episodes")) {
      results.push_back(episode(e.at("success"), e.at("path_length"), e.at("shortest_length"), e.at("dtg")));
    }
    CHECK(std::abs(spl(results) - c.at("spl").get<double>()) <= 1e-9);
    CHECK(std::abs(success_rate(results) - c.at("success_rate").get<double>()) <= 1e-9);
    CHECK(std::abs(distance_to_goal(results) - c.at("dtg").get<double>()) <= 1e-9);
  }
}

TEST_CASE("spl is bounded by the success rate") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> len(0.0, 30.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<EpisodeResult> results;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      const double l = rng() % 5 == 0 ? 0.0 : len(rng);
      results.push_back(episode(rng() & 1u, len(rng), l, len(rng)));
    }
    const double s = spl(results);
    CHECK(s >= 0.0);
    CHECK(s <= success_rate(results) + 1e-12);
    for (const auto& r : results) CHECK(spl({r}) <= success_rate({r}));
  }
}

TEST_CASE("summaries and episode files") {
  std::vector<EpisodeResult> results{episode(true, 6, 3), episode(false, 2, 4, 1.5)};
  results[0].subgoals = 3;
  results[0].hops = 4;
  results[0].trace.push_back({0, "door_1", "door", "reached", "place_3"});
  results[1].subgoals = 1;
  const NavigationSummary s = summarize(results);
  CHECK(s.episodes == 2);
  CHECK(s.success_rate == 0.5);
  CHECK(s.spl == 0.25);
  CHECK(s.dtg == 0.75);
  CHECK(s.mean_subgoals == 2.0);
  CHECK(s.mean_hops == 2.0);
  CHECK(summarize({}).episodes == 0);
  CHECK(json::parse(summary_to_json(s)).at("spl") == 0.25);

  const std::string table = format_summary_table({{"rule", s}, {"random", summarize({results[1]})}});
  CHECK(table.find("SPL") != std::string::npos);
  CHECK(table.find("rule") != std::string::npos);
  CHECK(table.find("0.250") != std::string::npos);

  const std::string text = episode_to_json(results[0]);
  const EpisodeResult back = episode_from_json(text);
  CHECK(episode_to_json(back) == text);
  CHECK(back.trace.at(0).node == "door_1");
  CHECK_THROWS_AS(episode_from_json("{"), std::runtime_error);
  CHECK_THROWS_AS(episode_from_json(R"({"goal": "bed"})"), std::runtime_error);
  CHECK_THROWS_AS(episode_from_json(R"({"goal":"bed","success":true,"path_length":-1,"shortest_length":1,"dtg":0})"),
                  std::runtime_error);
}

TEST_CASE("noiseless maps score perfectly") {
  const auto spec = osg::test::homes();
  for (std::uint64_t seed : {3u, 4u}) {
    const SceneWorld world = generate_world({2, 5, 4, seed});
    const GraphQualityReport report = graph_quality(noiseless_map(world), world, *spec);
    for (const auto& [cls, pr] : report.nodes) {
      CAPTURE(cls);
      CHECK(pr.precision() == 1.0);
      CHECK(pr.recall() == 1.0);
    }
    for (const auto& [type, pr] : report.edges) {
      CAPTURE(type);
      if (pr.predicted > 0) CHECK(pr.precision() == 1.0);
      if (pr.actual > 0) CHECK(pr.recall() == 1.0);
    }
    CHECK(report.nodes.at("room").actual == 10);
    CHECK(report.correspondence.size() == noiseless_map(world).node_count());
    CHECK(format_quality_table(report).find("room") != std::string::npos);
    CHECK(json::parse(quality_to_json(report)).at("nodes_total").is_object());
  }
}

TEST_CASE("node matching") {
  const auto spec = osg::test::homes();
  const SceneWorld world = generate_world({1, 6, 3, 8});
  Osg graph = noiseless_map(world);
  const std::size_t k = nodes_of_layer(graph, 3).size();
  REQUIRE(k == 6);

  SUBCASE("a hallucinated room") {
    graph.add_node("room", "ghost room", {"", std::nullopt, {{"nowhere", 2}}});
    const auto report = graph_quality(graph, world, *spec);
    CHECK(report.nodes.at("room").precision() == doctest::Approx(static_cast<double>(k) / (k + 1)));
    CHECK(report.nodes.at("room").recall() == 1.0);
  }
  SUBCASE("a weaker duplicate stays unmatched") {
    const std::string gt = world.places.front().gt_id;
    const NodeId dup = graph.add_node("room", "copy", {"", std::nullopt, {{gt, 1}}});
    const auto report = graph_quality(graph, world, *spec);
    CHECK(report.correspondence.count(dup.value) == 0);
    CHECK(report.nodes.at("room").true_positives == k);
    CHECK(report.nodes.at("room").predicted == k + 1);
  }
  SUBCASE("tied provenance is unmatched") {
    const NodeId tied = graph.add_node(
        "room", "blend", {"", std::nullopt, {{world.places[0].gt_id, 5}, {world.places[1].gt_id, 5}}});
    const auto report = graph_quality(graph, world, *spec);
    CHECK(report.correspondence.count(tied.value) == 0);
    CHECK(report.nodes.at("room").recall() == 1.0);
  }
  SUBCASE("a class mismatch is unmatched") {
    const NodeId wrong = graph.add_node("entrance", "door", {"", std::nullopt, {{world.places[2].gt_id, 9}}});
    const auto report = graph_quality(graph, world, *spec);
    CHECK(report.correspondence.count(wrong.value) == 0);
  }
}

TEST_CASE("graphs without provenance cannot be scored") {
  const auto spec = osg::test::homes();
  const SceneWorld world = generate_world({1, 3, 2, 1});
  Osg graph(spec);
  const NodeId a = graph.add_node("room", "kitchen");
  const NodeId b = graph.add_node("room", "bedroom");
  graph.add_edge(a, EdgeType::ConnectsTo, b);
  CHECK_THROWS_AS(graph_quality(graph, world, *spec), UnsupportedModeError);

  const auto empty = graph_quality(Osg(spec), world, *spec);
  CHECK_FALSE(empty.nodes.at("room").precision_defined());
  CHECK(empty.nodes.at("room").recall() == 0.0);
}

TEST_CASE("association on noiseless views") {
  const auto spec = osg::test::homes();
  RuleOracle oracle(osg::test::rule_config());
  std::vector<SceneWorld> worlds{generate_world({1, 4, 5, 31}), generate_world({1, 4, 5, 32})};
  const auto data = make_association_dataset(worlds, *spec, oracle, osg::test::rule_config().synonyms, NoiseModel{});
  CHECK(data.count_layer(3) == 8);
  CHECK(data.count_layer(1) > 0);
  CHECK(data.count_layer(2) > 0);
  for (const auto& item : data.items) {
    CHECK(item.first.label == item.second.label);
    CHECK(item.first.label == item.truth_label);
  }
  const auto acc = association_accuracy(data, *spec, oracle);
  CHECK(acc.overall.recognise.value() == 1.0);
  CHECK(acc.overall.recognise.total == data.items.size());
  CHECK(acc.overall.distinguish_different_type.value() == 1.0);
  CHECK(acc.objects.distinguish_different_type.total > 0);
  CHECK(json::parse(association_to_json(acc)).contains("overall"));
}

TEST_CASE("different entities with disjoint features are told apart") {
  const auto spec = osg::test::homes();
  RuleOracle oracle(osg::test::rule_config());
  AssociationDataset data;
  const char* labels[] = {"chair", "lamp", "sink", "bed", "television"};
  for (std::size_t i = 0; i < 5; ++i) {
    AssociationItem item;
    item.gt_id = "obj_" + std::to_string(i);
    item.place_gt = "place_0";
    item.class_name = "object";
    item.truth_label = labels[i];
    const std::string neighbour = std::string("thing") + static_cast<char>('a' + i);
    item.first = {NodeId(item.gt_id), labels[i], "plain", {{NodeId(), neighbour, "plain"}}};
    item.second = {NodeId(), labels[i], "plain", {{NodeId(), neighbour, "plain"}}};
    data.items.push_back(item);
  }
  const auto acc = association_accuracy(data, *spec, oracle);
  CHECK(acc.objects.distinguish_different_type.total == 20);
  CHECK(acc.objects.distinguish_different_type.value() == 1.0);
  CHECK(acc.objects.distinguish_same_type.total == 0);
}
