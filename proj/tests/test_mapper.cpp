#include <random>

#include "doctest.h"
#include "osg/mapper.hpp"
#include "osg/sim.hpp"
#include "support.hpp"

using namespace osg;

namespace {

Detection det(const std::string& label, double x, double y, const std::string& desc = "",
              double size = 40.0) {
  Detection d;
  d.label = label;
  d.description = desc;
  d.bbox = {x, y, size, size};
  return d;
}

Observation room(const std::string& label, std::vector<Detection> detections) {
  Observation o;
  o.place_class = "room";
  o.place_label = label;
  o.detections = std::move(detections);
  return o;
}

Observation kitchen() {
  return room("kitchen", {det("sink", 0, 0, "white porcelain"), det("oven", 400, 0, "black metal")});
}

std::vector<std::string> labels_of(const ParsedObservation& p, std::size_t layer) {
  std::vector<std::string> out;
  for (const auto& l : p.leaves) {
    if (static_cast<std::size_t>(l.layer) == layer) out.push_back(l.label);
  }
  return out;
}

bool near_by_definition(const BBox& a, const BBox& b, const MapperConfig& cfg) {
  const double dx = (a.x + a.w / 2) - (b.x + b.w / 2);
  const double dy = (a.y + a.h / 2) - (b.y + b.h / 2);
  const bool close = dx * dx + dy * dy <= cfg.beta_pix * cfg.beta_pix;
  double inter = 0.0;
  const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (w > 0 && h > 0) inter = w * h;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const bool overlap = uni > 0 && inter / uni >= cfg.beta_iou;
  return cfg.nearness_rule == NearnessRule::Either ? close || overlap : close && overlap;
}

}  // namespace

TEST_CASE("default mapper thresholds") {
  const MapperConfig cfg;
  CHECK(cfg.beta_pix == 100.0);
  CHECK(cfg.beta_iou == 0.1);
  CHECK(cfg.min_object_area == 200.0);
  CHECK(cfg.nearness_rule == NearnessRule::Either);
  CHECK_NOTHROW(cfg.validate());
  MapperConfig bad = cfg;
  bad.beta_pix = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.beta_iou = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.min_object_area = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("nearness examples") {
  const MapperConfig either;
  MapperConfig both;
  both.nearness_rule = NearnessRule::Both;
  CHECK(are_near(det("a", 0, 0), det("b", 50, 0), either));
  CHECK(are_near(det("a", 0, 0), det("b", 0, 0), either));
  CHECK_FALSE(are_near(det("a", 0, 0), det("b", 500, 0), either));
  Detection wide_a, wide_b;
  wide_a.bbox = {0, 0, 1000, 100};
  wide_b.bbox = {500, 0, 1000, 100};
  CHECK(centroid_distance(wide_a.bbox, wide_b.bbox) == doctest::Approx(500));
  CHECK(iou(wide_a.bbox, wide_b.bbox) == doctest::Approx(1.0 / 3.0));
  CHECK(are_near(wide_a, wide_b, either));
  CHECK_FALSE(are_near(wide_a, wide_b, both));
  CHECK(are_near(det("a", 0, 0), det("b", 100, 0), either));
  CHECK_FALSE(are_near(det("a", 0, 0), det("b", 100.001, 0), either));
}

TEST_CASE("nearness matches its definition on random boxes") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 600), size(1, 300);
  for (NearnessRule rule : {NearnessRule::Either, NearnessRule::Both}) {
    MapperConfig cfg;
    cfg.nearness_rule = rule;
    for (int i = 0; i < 5000; ++i) {
      Detection a, b;
      a.bbox = {pos(rng), pos(rng), size(rng), size(rng)};
      b.bbox = {pos(rng), pos(rng), size(rng), size(rng)};
      CHECK(are_near(a, b, cfg) == near_by_definition(a.bbox, b.bbox, cfg));
      CHECK(are_near(a, b, cfg) == are_near(b, a, cfg));
    }
  }
}

TEST_CASE("parse observation classifies and discards") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  const Observation obs = room("livingroom", {det("window", 0, 0), det("door", 60, 0), det("table", 400, 400),
                                              det("floor", 0, 200), det("wall", 300, 0), det("cup", 0, 0, "", 10)});
  const ParsedObservation p = parse_observation(obs, *spec, oracle);
  CHECK(p.place_label == "livingroom");
  CHECK(labels_of(p, 2) == std::vector<std::string>{"door"});
  CHECK(labels_of(p, 1) == std::vector<std::string>{"window", "table"});
  CHECK(p.connectors().size() == 1);
  CHECK(p.objects().size() == 2);
  // window (0,0) and door (60,0) are 60 px apart; the table is far from both.
  CHECK(p.is_near(0, 1));
  CHECK_FALSE(p.is_near(0, 2));
  CHECK(p.near.size() == 1);
  CHECK(p.leaves[0].name == "window_1");
  CHECK(p.leaves[1].class_name == "entrance");

  Observation wrong = obs;
  wrong.place_class = "floor";
  CHECK_THROWS_AS(parse_observation(wrong, *spec, oracle), std::invalid_argument);
}

TEST_CASE("state estimation") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  Osg graph(spec);
  const ParsedObservation k = parse_observation(kitchen(), *spec, oracle);
  CHECK_FALSE(estimate_state(*spec, graph, {}, k, oracle).has_value());

  const AgentState s = update_graph(*spec, graph, std::nullopt, {}, k, oracle);
  CHECK(estimate_state(*spec, graph, s, k, oracle) == std::optional<NodeId>(NodeId("kitchen_1")));

  SUBCASE("two bedrooms with disjoint features") {
    const Observation b1 = room("bedroom", {det("bed", 0, 0, "white wood"), det("lamp", 300, 0, "brown metal")});
    const Observation b2 = room("bedroom", {det("dresser", 0, 0, "brown wood"), det("mirror", 300, 0, "silver glass")});
    const auto p1 = parse_observation(b1, *spec, oracle);
    const auto p2 = parse_observation(b2, *spec, oracle);
    update_graph(*spec, graph, std::nullopt, s, p1, oracle);
    update_graph(*spec, graph, std::nullopt, s, p2, oracle);
    REQUIRE(graph.has_node(NodeId("bedroom_2")));
    // Brute force: the stored place whose features pass the match threshold.
    std::vector<NodeId> expected;
    for (const auto& n : graph.nodes()) {
      if (n.is_place() && n.label == "bedroom" &&
          feature_similarity(observed_place_features(p2).entries, object_features(graph, n.id).entries,
                             osg::test::rule_config().synonyms) >= osg::test::rule_config().feature_match_threshold) {
        expected.push_back(n.id);
      }
    }
    REQUIRE(expected.size() == 1);
    CHECK(expected[0] == NodeId("bedroom_2"));
    CHECK(estimate_state(*spec, graph, s, p2, oracle) == std::optional<NodeId>(expected[0]));
    CHECK(estimate_state(*spec, graph, s, p1, oracle) == std::optional<NodeId>(NodeId("bedroom_1")));
  }
}

TEST_CASE("hop distance ignores non-connects-to edges") {
  const auto spec = osg::test::homes();
  Osg g(spec);
  const NodeId a = g.add_node("room", "kitchen");
  const NodeId door = g.add_node("entrance", "door");
  const NodeId b = g.add_node("room", "bedroom");
  const NodeId c = g.add_node("room", "bathroom");
  const NodeId f = g.add_node("floor", "floor");
  g.add_edge(a, EdgeType::ConnectsTo, door);
  g.add_edge(door, EdgeType::ConnectsTo, b);
  g.add_edge(f, EdgeType::Contains, a);
  g.add_edge(f, EdgeType::Contains, c);
  CHECK(hop_distance(g, a, a) == 0);
  CHECK(hop_distance(g, b, a) == 2);
  CHECK_FALSE(hop_distance(g, a, c).has_value());
  CHECK_FALSE(hop_distance(g, a, NodeId("nowhere_1")).has_value());
}

TEST_CASE("new place builds the hierarchy") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  Osg graph(spec);
  const MapStepResult r = map_step(*spec, graph, {}, kitchen(), oracle);
  CHECK(r.new_place);
  CHECK(r.state.current_place == std::optional<NodeId>(NodeId("kitchen_1")));
  CHECK(graph.node_count() == 4);
  CHECK(graph.has_edge(NodeId("floor_1"), EdgeType::Contains, NodeId("kitchen_1")));
  CHECK(graph.has_edge(NodeId("kitchen_1"), EdgeType::Contains, NodeId("sink_1")));
  CHECK(graph.has_edge(NodeId("kitchen_1"), EdgeType::Contains, NodeId("oven_1")));
  CHECK(graph.edge_count() == 3);
  CHECK(validate_graph_against_spec(graph, *spec).empty());
}

TEST_CASE("revisiting an unchanged place changes nothing") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  Osg graph(spec);
  const Observation obs = room("livingroom", {det("sofa", 0, 0, "gray fabric"), det("tv", 50, 0, "black glass"),
                                              det("door", 300, 0, "white wood"), det("lamp", 600, 0)});
  AgentState state = map_step(*spec, graph, {}, obs, oracle).state;
  const std::string before = serialize_graph(graph);
  for (int i = 0; i < 3; ++i) {
    const MapStepResult again = map_step(*spec, graph, state, obs, oracle);
    CHECK_FALSE(again.new_place);
    CHECK(again.state.current_place == state.current_place);
    state = again.state;
  }
  CHECK(serialize_graph(graph) == before);
}

TEST_CASE("crossing stairs starts a new floor") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  Osg graph(spec);
  const Observation hall = room("hallway", {det("stairs", 0, 0, "brown wood"), det("rug", 300, 300)});
  const AgentState s1 = map_step(*spec, graph, {}, hall, oracle).state;
  REQUIRE(graph.has_node(NodeId("stairs_1")));
  CHECK(graph.has_edge(NodeId("hallway_1"), EdgeType::ConnectsTo, NodeId("stairs_1")));

  const Observation upstairs = room("bedroom", {det("stairs", 0, 0, "brown wood"), det("bed", 300, 300)});
  const MapStepResult r = map_step(*spec, graph, s1, upstairs, oracle, {}, NodeId("stairs_1"));
  CHECK(r.state.current_place == std::optional<NodeId>(NodeId("bedroom_1")));
  CHECK(graph.has_edge(NodeId("floor_2"), EdgeType::Contains, NodeId("bedroom_1")));
  CHECK(graph.has_edge(NodeId("floor_2"), EdgeType::ConnectsTo, NodeId("stairs_1")));
  CHECK(graph.has_edge(NodeId("floor_1"), EdgeType::ConnectsTo, NodeId("stairs_1")));
  // The staircase seen on arrival is the one just climbed.
  CHECK_FALSE(graph.has_node(NodeId("stairs_2")));
  CHECK(graph.has_edge(NodeId("bedroom_1"), EdgeType::ConnectsTo, NodeId("stairs_1")));
  CHECK(validate_graph_against_spec(graph, *spec).empty());

  // Through a door the floor carries over.
  const Observation bath = room("bathroom", {det("toilet", 0, 0), det("door", 300, 300)});
  map_step(*spec, graph, r.state, bath, oracle, {}, NodeId("bed_1"));
  CHECK(graph.has_edge(NodeId("floor_2"), EdgeType::Contains, NodeId("bathroom_1")));
  CHECK_FALSE(graph.has_node(NodeId("floor_3")));
}

TEST_CASE("random walks keep graphs conformant and ids stable") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CAPTURE(seed);
    const SceneWorld world = generate_world({2, 5, 5, seed});
    std::vector<std::pair<std::string, std::string>> seen;  // id, class
    bool ok = true;
    const Osg g = map_random_walk(world, spec, oracle, osg::test::rule_config().synonyms, {},
                                  NoiseModel::default_profile(), 25, seed, [&](const Osg& step) {
                                    ok = ok && validate_graph_against_spec(step, *spec).empty();
                                    for (const auto& [id, cls] : seen) {
                                      ok = ok && step.has_node(NodeId(id)) && step.node(NodeId(id)).class_name == cls;
                                    }
                                    seen.clear();
                                    for (const auto& n : step.nodes()) seen.emplace_back(n.id.value, n.class_name);
                                  });
    CHECK(ok);
    const Osg again = map_random_walk(world, spec, oracle, osg::test::rule_config().synonyms, {},
                                      NoiseModel::default_profile(), 25, seed);
    CHECK(serialize_graph(g) == serialize_graph(again));
  }
}

TEST_CASE("different worlds give different graphs") {
  RuleOracle oracle(osg::test::rule_config());
  const auto spec = osg::test::homes();
  const auto map = [&](std::uint64_t seed) {
    return serialize_graph(map_full_coverage(generate_world({1, 6, 4, seed}), spec, oracle,
                                             osg::test::rule_config().synonyms, {}, NoiseModel{}));
  };
  CHECK(map(1) != map(2));
  CHECK(map(3) == map(3));
}
