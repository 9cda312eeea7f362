#include <random>

#include "doctest.h"
#include "osg/graph.hpp"
#include "support.hpp"

using namespace osg;

namespace {

/// floor_1 holding kitchen_1 and livingroom_1, joined by door_1 (near towel_1).
Osg two_rooms() {
  Osg g(osg::test::homes());
  const NodeId floor = g.add_node("floor", "floor");
  const NodeId kitchen = g.add_node("room", "kitchen");
  const NodeId living = g.add_node("room", "livingroom");
  const NodeId door = g.add_node("entrance", "door", {"white wood", std::nullopt, {}});
  const NodeId towel = g.add_node("object", "towel", {"blue cotton", std::nullopt, {{"gt_towel", 2}}});
  g.add_edge(floor, EdgeType::Contains, kitchen);
  g.add_edge(floor, EdgeType::Contains, living);
  g.add_edge(kitchen, EdgeType::Contains, towel);
  g.add_edge(kitchen, EdgeType::ConnectsTo, door);
  g.add_edge(living, EdgeType::ConnectsTo, door);
  g.add_edge(door, EdgeType::ConnectsTo, kitchen);
  g.add_edge(door, EdgeType::ConnectsTo, living);
  g.add_edge(door, EdgeType::IsNear, towel);
  return g;
}

/// Random graph built only from spec-permitted insertions.
Osg random_legal_graph(std::mt19937_64& rng, int nodes, int edges) {
  const auto spec = osg::test::homes();
  Osg g(spec);
  const std::vector<std::string> classes{"floor", "room", "stairs", "entrance", "object"};
  const std::vector<std::string> labels{"a", "b", "c", "kitchen", "door"};
  for (int i = 0; i < nodes; ++i) {
    g.add_node(classes[rng() % classes.size()], labels[rng() % labels.size()]);
  }
  const EdgeType types[] = {EdgeType::IsNear, EdgeType::ConnectsTo, EdgeType::Contains};
  for (int i = 0; i < edges && g.node_count() > 1; ++i) {
    const Node& a = g.nodes()[rng() % g.node_count()];
    const Node& b = g.nodes()[rng() % g.node_count()];
    const EdgeType t = types[rng() % 3];
    if (a.id == b.id || !spec->permits(a.class_name, t, b.class_name)) continue;
    if (t == EdgeType::Contains && g.contains_parent(b.id)) continue;
    g.add_edge(a.id, t, b.id);
  }
  return g;
}

}  // namespace

TEST_CASE("node ids count per label") {
  Osg g(osg::test::homes());
  CHECK(g.add_node("room", "kitchen").value == "kitchen_1");
  CHECK(g.add_node("room", "kitchen").value == "kitchen_2");
  CHECK(g.add_node("object", "kitchen").value == "kitchen_3");
  CHECK(g.add_node("room", "bedroom").value == "bedroom_1");
}

TEST_CASE("add_node rejects undeclared classes and empty labels") {
  Osg g(osg::test::homes());
  CHECK_THROWS_AS(g.add_node("aisle", "dairy"), GraphError);
  CHECK_THROWS_AS(g.add_node("room", ""), GraphError);
  CHECK(g.node_count() == 0);
}

TEST_CASE("edge legality and idempotence") {
  Osg g(osg::test::homes());
  const NodeId room = g.add_node("room", "kitchen");
  const NodeId sink = g.add_node("object", "sink");
  g.add_edge(room, EdgeType::Contains, sink);
  CHECK(g.edge_count() == 1);
  g.add_edge(room, EdgeType::Contains, sink);
  CHECK(g.edge_count() == 1);
  CHECK_THROWS_AS(g.add_edge(sink, EdgeType::ConnectsTo, room), GraphError);
  CHECK_THROWS_AS(g.add_edge(room, EdgeType::IsNear, sink), GraphError);
  CHECK_THROWS_AS(g.add_edge(room, EdgeType::Contains, NodeId("ghost_1")), GraphError);
}

TEST_CASE("contains parents are unique") {
  Osg g(osg::test::homes());
  const NodeId a = g.add_node("room", "kitchen");
  const NodeId b = g.add_node("room", "bathroom");
  const NodeId sink = g.add_node("object", "sink");
  g.add_edge(a, EdgeType::Contains, sink);
  CHECK_THROWS_AS(g.add_edge(b, EdgeType::Contains, sink), GraphError);
  CHECK(g.contains_parent(sink) == a);
}

TEST_CASE("lenient graphs report what strict graphs refuse") {
  Osg g(osg::test::homes(), Osg::Checking::Lenient);
  const NodeId room = g.add_node("room", "kitchen");
  const NodeId other = g.add_node("room", "bathroom");
  const NodeId sink = g.add_node("object", "sink");
  CHECK(validate_graph_against_spec(g, g.spec()).empty());
  g.add_edge(room, EdgeType::IsNear, sink);
  auto diags = validate_graph_against_spec(g, g.spec());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].rule == rule::kIllegalEdge);

  Osg h(osg::test::homes(), Osg::Checking::Lenient);
  const NodeId r1 = h.add_node("room", "kitchen");
  const NodeId r2 = h.add_node("room", "bathroom");
  const NodeId s = h.add_node("object", "sink");
  h.add_edge(r1, EdgeType::Contains, s);
  h.add_edge(r2, EdgeType::Contains, s);
  diags = validate_graph_against_spec(h, h.spec());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].rule == rule::kMultiParent);
  (void)other;

  Osg u(osg::test::homes(), Osg::Checking::Lenient);
  u.add_node("aisle", "dairy");
  diags = validate_graph_against_spec(u, u.spec());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].rule == rule::kUndeclaredClass);
}

TEST_CASE("empty graph validates under every spec") {
  for (const char* name : {"homes", "apartment", "office", "supermarket", "mall"}) {
    Osg g(osg::test::load_spec(name));
    CHECK(validate_graph_against_spec(g, g.spec()).empty());
  }
}

TEST_CASE("object features") {
  const Osg g = two_rooms();
  CHECK(object_features(g, NodeId("towel_1")).entries.empty());

  const auto door = object_features(g, NodeId("door_1"));
  REQUIRE(door.entries.size() == 1);
  CHECK(door.entries[0].label == "towel");
  CHECK(door.entries[0].description == "blue cotton");

  const auto kitchen = object_features(g, NodeId("kitchen_1"));
  REQUIRE(kitchen.entries.size() == 2);
  CHECK(kitchen.entries[0].node.value == "towel_1");
  CHECK(kitchen.entries[1].node.value == "door_1");

  CHECK_THROWS_AS(object_features(g, NodeId("floor_1")), GraphError);
}

TEST_CASE("place features list contained leaves then connectors in edge order") {
  Osg g(osg::test::homes());
  const NodeId bath = g.add_node("room", "bathroom");
  const NodeId sink = g.add_node("object", "sink");
  const NodeId mirror = g.add_node("object", "mirror");
  const NodeId door = g.add_node("entrance", "door");
  g.add_edge(bath, EdgeType::Contains, sink);
  g.add_edge(bath, EdgeType::Contains, mirror);
  g.add_edge(bath, EdgeType::ConnectsTo, door);
  const auto f = object_features(g, bath);
  REQUIRE(f.entries.size() == 3);
  CHECK(f.entries[0].label == "sink");
  CHECK(f.entries[1].label == "mirror");
  CHECK(f.entries[2].label == "door");
}

TEST_CASE("structural queries match brute-force edge scans") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 50; ++round) {
    const Osg g = random_legal_graph(rng, 25, 80);
    for (int layer = 1; layer <= 4; ++layer) {
      std::vector<NodeId> expect;
      for (const auto& n : g.nodes()) {
        if (n.layer == layer) expect.push_back(n.id);
      }
      CHECK(nodes_of_layer(g, layer) == expect);
    }
    for (const auto& n : g.nodes()) {
      std::vector<NodeId> kids;
      std::vector<NodeId> near;
      std::vector<NodeId> leaves;
      for (const auto& e : g.edges()) {
        if (e.source == n.id && e.type == EdgeType::Contains) kids.push_back(e.target);
        if (e.source == n.id && e.type == EdgeType::IsNear) near.push_back(e.target);
        if (n.is_place()) {
          const bool own = e.type == EdgeType::Contains && e.source == n.id && g.node(e.target).is_leaf();
          const bool linked = e.type == EdgeType::ConnectsTo && (e.source == n.id || e.target == n.id) &&
                              g.node(e.source == n.id ? e.target : e.source).layer == 2;
          const NodeId other = e.source == n.id ? e.target : e.source;
          if ((own || linked) && std::find(leaves.begin(), leaves.end(), other) == leaves.end()) {
            leaves.push_back(other);
          }
        }
      }
      if (n.layer >= 3) CHECK(children(g, n.id) == kids);
      if (n.is_abstraction()) continue;
      std::vector<NodeId> got;
      for (const auto& entry : object_features(g, n.id).entries) got.push_back(entry.node);
      CHECK(got == (n.is_place() ? leaves : near));
    }
  }
}

TEST_CASE("random legal construction stays valid") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 100; ++round) {
    const Osg g = random_legal_graph(rng, 30, 120);
    CHECK(validate_graph_against_spec(g, g.spec()).empty());
    std::map<std::string, int> parents;
    for (const auto& e : g.edges()) {
      if (e.type == EdgeType::Contains) ++parents[e.target.value];
    }
    for (const auto& [id, count] : parents) CHECK(count == 1);
  }
}

TEST_CASE("serialization round trip") {
  SUBCASE("empty") {
    const Osg g(osg::test::homes());
    const Osg back = deserialize_graph(serialize_graph(g), osg::test::homes());
    CHECK(back.node_count() == 0);
    CHECK(serialize_graph(back) == serialize_graph(g));
  }
  SUBCASE("two rooms with provenance") {
    const Osg g = two_rooms();
    const Osg back = deserialize_graph(serialize_graph(g), osg::test::homes());
    CHECK(serialize_graph(back) == serialize_graph(g));
    CHECK(back.node(NodeId("towel_1")).provenance.at("gt_towel") == 2);
    CHECK(back.edges() == g.edges());
    // Counters continue after a reload.
    Osg more = back;
    CHECK(more.add_node("room", "kitchen").value == "kitchen_2");
  }
  SUBCASE("random graphs") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 30; ++i) {
      const Osg g = random_legal_graph(rng, 20, 60);
      const Osg back = deserialize_graph(serialize_graph(g), osg::test::homes());
      CHECK(serialize_graph(back) == serialize_graph(g));
    }
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(deserialize_graph("{", osg::test::homes()), GraphError);
    CHECK_THROWS_AS(deserialize_graph(R"({"nodes": 1})", osg::test::homes()), GraphError);
    const std::string aisle = R"({"nodes": [{"id": "dairy_1", "class": "aisle", "layer": 3, "label": "dairy"}], "edges": []})";
    CHECK_THROWS_AS(deserialize_graph(aisle, osg::test::homes()), GraphError);
  }
}

TEST_CASE("layout payload") {
  const Osg g = two_rooms();
  CHECK(render_layout(g) ==
        R"({"floor": {"floor_1": {"contains": ["kitchen_1", "livingroom_1"]}}, )"
        R"("room": {"kitchen_1": {"connects to": ["door_1"]}, "livingroom_1": {"connects to": ["door_1"]}}, )"
        R"("entrance": {"door_1": {"is near": ["towel_1"], "connects to": ["kitchen_1", "livingroom_1"]}}})");
  CHECK(serialize_graph(g).find("\"layout\"") != std::string::npos);
  CHECK(render_layout(Osg(osg::test::homes())) == "{}");
}

TEST_CASE("dot export") {
  const std::string empty = render_dot(Osg(osg::test::homes()));
  CHECK(empty == "digraph osg {\n  rankdir=BT;\n}\n");

  const std::string dot = render_dot(two_rooms());
  CHECK(dot.find("subgraph layer_3 {\n    rank=same;\n    \"kitchen_1\"") != std::string::npos);
  CHECK(dot.find("\"livingroom_1\" [label=\"livingroom_1\\nroom\", shape=box]") != std::string::npos);
  CHECK(dot.find("\"door_1\" [label=\"door_1\\nentrance\", shape=diamond]") != std::string::npos);
  CHECK(dot.find("\"floor_1\" -> \"kitchen_1\" [style=solid, label=\"contains\"]") != std::string::npos);
  CHECK(dot.find("\"door_1\" -> \"towel_1\" [style=dotted") != std::string::npos);
  CHECK(dot.find("\"kitchen_1\" -> \"door_1\" [style=dashed") != std::string::npos);
  CHECK(render_dot(two_rooms()) == dot);
}

TEST_CASE("merge_observation folds provenance counts") {
  Osg g(osg::test::homes());
  const NodeId sink = g.add_node("object", "sink", {"white", std::nullopt, {{"gt_1", 1}}});
  g.merge_observation(sink, {"white ceramic", std::nullopt, {{"gt_1", 1}, {"gt_2", 1}}});
  CHECK(g.node(sink).provenance.at("gt_1") == 2);
  CHECK(g.node(sink).provenance.at("gt_2") == 1);
}
