#include "osg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "json.hpp"
#include "osg/reasoner.hpp"

namespace osg {

using json = nlohmann::ordered_json;

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h ^ (p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    h = z ^ (z >> 31);
  }
  return h;
}

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {

struct RoomType {
  std::string label;
  int weight;
  std::vector<std::string> contents;
  std::vector<std::string> hints;  // what can be glimpsed of this room from next door
};

const std::vector<RoomType>& room_types() {
  static const std::vector<RoomType> types = {
      {"bedroom", 3,
       {"bed", "nightstand", "wardrobe", "lamp", "dresser", "mirror", "pillow", "rug"},
       {"wardrobe", "nightstand", "dresser"}},
      {"kitchen", 1,
       {"oven", "fridge", "microwave", "kettle", "toaster", "cabinet", "stool", "dish rack"},
       {"fridge", "microwave", "kettle"}},
      {"bathroom", 2,
       {"toilet", "bathtub", "sink", "towel", "shower", "mirror", "toothbrush", "bath mat"},
       {"towel", "shower", "bath mat"}},
      {"living room", 1,
       {"sofa", "tv", "coffee table", "armchair", "bookshelf", "plant", "lamp", "rug"},
       {"armchair", "bookshelf", "coffee table"}},
      {"dining room", 1,
       {"dining table", "chair", "cupboard", "vase", "candle", "plant"},
       {"cupboard", "vase", "candle"}},
      {"office", 1,
       {"desk", "office chair", "computer", "printer", "bookshelf", "filing cabinet"},
       {"printer", "filing cabinet"}},
      {"laundry room", 1,
       {"washing machine", "dryer", "laundry basket", "ironing board", "shelf"},
       {"laundry basket", "ironing board"}},
      {"hallway", 2,
       {"coat rack", "shoe rack", "umbrella stand", "painting", "plant"},
       {"coat rack", "shoe rack"}},
  };
  return types;
}

const RoomType& room_type(const std::string& label) {
  for (const auto& t : room_types()) {
    if (t.label == label) return t;
  }
  throw WorldError("unknown room type '" + label + "'");
}

const std::vector<std::string>& clutter_labels() {
  static const std::vector<std::string> labels = {"cup",  "book", "bottle", "remote",
                                                  "box",  "bag",  "shoe",   "toy"};
  return labels;
}

const std::vector<std::string> kColours = {"red",   "blue",  "green", "yellow", "white", "black",
                                           "grey",  "brown", "beige", "orange", "pink",  "purple",
                                           "teal",  "navy",  "olive", "cream"};
const std::vector<std::string> kFinishes = {"glossy", "matte",   "striped", "dotted",
                                            "worn",   "polished", "faded",   "patterned",
                                            "smooth", "carved",   "rough",   "quilted"};
const std::vector<std::string> kMaterials = {"wooden", "metal",  "plastic", "glass",  "ceramic",
                                             "fabric", "leather", "marble", "wicker", "stone",
                                             "velvet", "bamboo", "steel",   "oak"};

const std::set<std::string>& large_labels() {
  static const std::set<std::string> s = {"bed",       "wardrobe",   "dresser",        "oven",
                                          "fridge",    "bathtub",    "shower",         "sofa",
                                          "bookshelf", "dining table", "desk",         "washing machine",
                                          "dryer",     "cupboard",   "filing cabinet", "door",
                                          "stairs"};
  return s;
}

const std::set<std::string>& small_labels() {
  static const std::set<std::string> s = {"kettle", "toaster", "toothbrush", "vase", "candle",
                                          "pillow", "lamp",    "cup",        "book", "bottle",
                                          "remote", "box",     "bag",        "shoe", "toy"};
  return s;
}

std::string size_class_of(const std::string& label) {
  if (large_labels().count(label) != 0) return "large";
  if (small_labels().count(label) != 0) return "small";
  return "medium";
}

std::pair<double, double> size_range(const std::string& size_class) {
  if (size_class == "large") return {40.0, 50.0};
  if (size_class == "small") return {20.0, 30.0};
  return {30.0, 40.0};
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

constexpr int kSlotCols = 4;
constexpr int kSlotRows = 3;
constexpr int kSlots = kSlotCols * kSlotRows;
constexpr double kJitter = 12.5;

std::pair<double, double> slot_centre(int slot) {
  return {80.0 + 160.0 * (slot % kSlotCols), 80.0 + 160.0 * (slot / kSlotCols)};
}

BBox make_bbox(int slot, const std::string& size_class, SimRng& rng) {
  const auto [cx0, cy0] = slot_centre(slot);
  const auto [lo, hi] = size_range(size_class);
  const double cx = cx0 + rng.range(-kJitter, kJitter);
  const double cy = cy0 + rng.range(-kJitter, kJitter);
  const double w = round1(rng.range(lo, hi));
  const double h = round1(rng.range(lo, hi));
  return {round1(cx - w / 2.0), round1(cy - h / 2.0), w, h};
}

/// Per-label description stream: the first few instances of a label share no
/// token, and (label, description) pairs stay unique for a long run.
class DescriptionPool {
 public:
  explicit DescriptionPool(SimRng& rng) : rng_(rng) {}

  std::string next(const std::string& label) {
    auto it = state_.find(label);
    if (it == state_.end()) {
      State s;
      s.colours = kColours;
      s.finishes = kFinishes;
      s.materials = kMaterials;
      rng_.shuffle(s.colours);
      rng_.shuffle(s.finishes);
      rng_.shuffle(s.materials);
      it = state_.emplace(label, std::move(s)).first;
    }
    State& s = it->second;
    const std::size_t k = s.count++;
    return s.colours[k % s.colours.size()] + " " + s.finishes[k % s.finishes.size()] + " " +
           s.materials[k % s.materials.size()];
  }

 private:
  struct State {
    std::vector<std::string> colours, finishes, materials;
    std::size_t count = 0;
  };
  SimRng& rng_;
  std::map<std::string, State> state_;
};

const std::string kPlaceClass = "room";
const std::string kRegionClass = "floor";
const std::string kDoorClass = "entrance";
const std::string kStairsClass = "stairs";

}  // namespace

const std::vector<std::string>& homes_goal_labels() {
  static const std::vector<std::string> goals = {"bed",     "toilet",          "tv",  "sofa",
                                                 "oven",    "bathtub",         "desk", "washing machine"};
  return goals;
}

// ---------------------------------------------------------------------------
// SceneWorld

const WorldPlace& SceneWorld::place(const std::string& gt_id) const {
  for (const auto& p : places) {
    if (p.gt_id == gt_id) return p;
  }
  throw WorldError("unknown place '" + gt_id + "'");
}

const WorldConnector& SceneWorld::connector(const std::string& gt_id) const {
  for (const auto& c : connectors) {
    if (c.gt_id == gt_id) return c;
  }
  throw WorldError("unknown connector '" + gt_id + "'");
}

bool SceneWorld::has_place(const std::string& gt_id) const {
  return std::any_of(places.begin(), places.end(), [&](const auto& p) { return p.gt_id == gt_id; });
}

bool SceneWorld::has_connector(const std::string& gt_id) const {
  return std::any_of(connectors.begin(), connectors.end(),
                     [&](const auto& c) { return c.gt_id == gt_id; });
}

std::optional<std::string> SceneWorld::place_of(const std::string& gt_id) const {
  for (const auto& p : places) {
    if (p.gt_id == gt_id) return p.gt_id;
    for (const auto& e : p.contents) {
      if (e.gt_id == gt_id) return p.gt_id;
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> SceneWorld::neighbours(
    const std::string& place_id) const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& view : place(place_id).connectors) {
    const WorldConnector& c = connector(view.connector);
    out.emplace_back(c.gt_id, c.links[0] == place_id ? c.links[1] : c.links[0]);
  }
  return out;
}

std::map<std::string, std::vector<std::string>> SceneWorld::goal_instances() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& p : places) {
    for (const auto& e : p.contents) out[e.label].push_back(e.gt_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

SceneWorld generate_world(const WorldParams& params) {
  if (params.num_floors < 1) throw std::invalid_argument("num_floors must be at least 1");
  if (params.rooms_per_floor < 1) throw std::invalid_argument("rooms_per_floor must be at least 1");
  if (params.objects_per_room < 0) throw std::invalid_argument("objects_per_room must be >= 0");

  SimRng rng(mix_seed({params.seed, 0x301d}));
  DescriptionPool descriptions(rng);
  SceneWorld world;
  world.params = params;

  const int side =
      std::max(3, static_cast<int>(std::ceil(std::sqrt(2.0 * params.rooms_per_floor))) + 1);
  constexpr double kCell = 4.0;
  constexpr double kStorey = 3.0;
  const int dx[4] = {0, 1, 0, -1};
  const int dy[4] = {-1, 0, 1, 0};

  int total_weight = 0;
  for (const auto& t : room_types()) total_weight += t.weight;
  auto draw_room_label = [&]() {
    int r = static_cast<int>(rng.below(static_cast<std::size_t>(total_weight)));
    for (const auto& t : room_types()) {
      if (r < t.weight) return t.label;
      r -= t.weight;
    }
    return room_types().back().label;
  };

  // Place skeleton: per floor a random tree of rooms on a grid.
  std::vector<std::pair<int, int>> cells;  // per place
  std::pair<int, int> start_cell{side / 2, side / 2};
  std::optional<std::size_t> stairs_from;
  int door_count = 0;
  for (int f = 0; f < params.num_floors; ++f) {
    WorldRegion region{"floor" + std::to_string(f + 1), kRegionClass,
                       "floor " + std::to_string(f + 1), f};
    world.regions.push_back(region);
    std::map<std::pair<int, int>, std::size_t> occupied;
    std::vector<std::size_t> floor_places;
    auto add_room = [&](std::pair<int, int> cell) {
      WorldPlace p;
      p.gt_id = region.gt_id + "/room" + std::to_string(floor_places.size() + 1);
      p.class_name = kPlaceClass;
      p.label = draw_room_label();
      p.position = {cell.first * kCell, cell.second * kCell, f * kStorey};
      p.floor = f;
      p.region = region.gt_id;
      world.places.push_back(std::move(p));
      cells.push_back(cell);
      occupied[cell] = world.places.size() - 1;
      floor_places.push_back(world.places.size() - 1);
      return world.places.size() - 1;
    };
    const std::size_t first = add_room(start_cell);
    if (stairs_from) {
      WorldConnector s;
      s.gt_id = "stairs" + std::to_string(f);
      s.class_name = kStairsClass;
      s.label = "stairs";
      s.links = {world.places[*stairs_from].gt_id, world.places[first].gt_id};
      const Vec3& a = world.places[*stairs_from].position;
      const Vec3& b = world.places[first].position;
      s.position = {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0, (a.z + b.z) / 2.0};
      world.connectors.push_back(std::move(s));
    }
    while (static_cast<int>(floor_places.size()) < params.rooms_per_floor) {
      std::vector<std::pair<std::size_t, int>> options;
      for (std::size_t idx : floor_places) {
        for (int d = 0; d < 4; ++d) {
          const std::pair<int, int> c{cells[idx].first + dx[d], cells[idx].second + dy[d]};
          if (c.first < 0 || c.second < 0 || c.first >= side || c.second >= side) continue;
          if (occupied.count(c) == 0) options.emplace_back(idx, d);
        }
      }
      if (options.empty()) throw WorldError("floor grid exhausted");
      const auto [from, d] = options[rng.below(options.size())];
      const std::size_t to = add_room({cells[from].first + dx[d], cells[from].second + dy[d]});
      WorldConnector door;
      door.gt_id = region.gt_id + "/door" + std::to_string(++door_count);
      door.class_name = kDoorClass;
      door.label = "door";
      door.links = {world.places[from].gt_id, world.places[to].gt_id};
      const Vec3& a = world.places[from].position;
      const Vec3& b = world.places[to].position;
      door.position = {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0, a.z};
      world.connectors.push_back(std::move(door));
    }
    door_count = 0;
    if (f + 1 < params.num_floors) {
      stairs_from = floor_places[rng.below(floor_places.size())];
      start_cell = cells[*stairs_from];
    }
  }
  for (auto& c : world.connectors) c.description = descriptions.next(c.label);

  // Contents: object clusters plus one cluster around each connector.
  int object_count = 0;
  for (auto& p : world.places) {
    std::vector<std::string> connector_ids;
    for (const auto& c : world.connectors) {
      if (c.links[0] == p.gt_id || c.links[1] == p.gt_id) connector_ids.push_back(c.gt_id);
    }
    std::vector<int> slots(kSlots);
    for (int i = 0; i < kSlots; ++i) slots[i] = i;
    rng.shuffle(slots);
    const int object_slots = kSlots - static_cast<int>(connector_ids.size());
    if (object_slots < 1 && params.objects_per_room > 0) throw WorldError("too many connectors");

    const RoomType& type = room_type(p.label);
    std::vector<std::string> pool = type.contents;
    rng.shuffle(pool);
    std::vector<std::string> labels;
    for (int i = 0; i < params.objects_per_room; ++i) {
      labels.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
    }
    std::vector<int> group_sizes;
    for (int left = params.objects_per_room; left > 0;) {
      const int g = std::min(left, 1 + static_cast<int>(rng.below(3)));
      group_sizes.push_back(g);
      left -= g;
    }
    if (static_cast<int>(group_sizes.size()) > object_slots) {
      group_sizes.assign(static_cast<std::size_t>(object_slots), 0);
      for (int i = 0; i < params.objects_per_room; ++i) ++group_sizes[static_cast<std::size_t>(i % object_slots)];
    }
    auto add_object = [&](const std::string& label, int cluster) {
      WorldEntity e;
      e.gt_id = p.gt_id + "/obj" + std::to_string(++object_count);
      e.label = label;
      e.description = descriptions.next(label);
      e.size_class = size_class_of(label);
      e.cluster = cluster;
      e.bbox = make_bbox(cluster, e.size_class, rng);
      p.contents.push_back(std::move(e));
    };
    std::size_t next_slot = 0;
    std::size_t next_label = 0;
    for (int g : group_sizes) {
      const int cluster = slots[next_slot++];
      for (int k = 0; k < g; ++k) add_object(labels[next_label++], cluster);
    }
    for (const auto& cid : connector_ids) {
      const WorldConnector& c = world.connector(cid);
      const int cluster = slots[next_slot++];
      p.connectors.push_back({cid, cluster, make_bbox(cluster, size_class_of(c.label), rng)});
      const std::string& other = c.links[0] == p.gt_id ? c.links[1] : c.links[0];
      std::vector<std::string> hints = room_type(world.place(other).label).hints;
      rng.shuffle(hints);
      const std::size_t n = std::min<std::size_t>(hints.size(), 1 + rng.below(2));
      for (std::size_t k = 0; k < n; ++k) add_object(hints[k], cluster);
    }
    object_count = 0;
  }
  return world;
}

std::vector<std::string> check_world(const SceneWorld& world) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  auto unique = [&](const std::string& id) {
    if (id.empty() || !ids.insert(id).second) problems.push_back("duplicate or empty gt id '" + id + "'");
  };
  auto finite = [](const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
  };
  std::set<std::string> region_ids;
  for (const auto& r : world.regions) {
    unique(r.gt_id);
    region_ids.insert(r.gt_id);
  }
  for (const auto& p : world.places) {
    unique(p.gt_id);
    if (!finite(p.position)) problems.push_back("place '" + p.gt_id + "' has a non-finite position");
    if (!p.region.empty() && region_ids.count(p.region) == 0) {
      problems.push_back("place '" + p.gt_id + "' names unknown region '" + p.region + "'");
    }
    for (const auto& e : p.contents) unique(e.gt_id);
  }
  for (const auto& c : world.connectors) {
    unique(c.gt_id);
    if (!finite(c.position)) problems.push_back("connector '" + c.gt_id + "' has a non-finite position");
    for (const auto& l : c.links) {
      if (!world.has_place(l)) problems.push_back("connector '" + c.gt_id + "' links unknown place '" + l + "'");
    }
  }
  for (const auto& p : world.places) {
    for (const auto& v : p.connectors) {
      if (!world.has_connector(v.connector)) {
        problems.push_back("place '" + p.gt_id + "' views unknown connector '" + v.connector + "'");
      } else {
        const auto& links = world.connector(v.connector).links;
        if (links[0] != p.gt_id && links[1] != p.gt_id) {
          problems.push_back("connector '" + v.connector + "' does not link '" + p.gt_id + "'");
        }
      }
    }
  }
  if (!problems.empty()) return problems;

  // Connectivity of each floor through same-floor connectors.
  std::map<int, std::vector<std::string>> by_floor;
  for (const auto& p : world.places) by_floor[p.floor].push_back(p.gt_id);
  for (const auto& [floor, members] : by_floor) {
    std::set<std::string> seen{members.front()};
    std::vector<std::string> stack{members.front()};
    while (!stack.empty()) {
      const std::string cur = stack.back();
      stack.pop_back();
      for (const auto& [conn, other] : world.neighbours(cur)) {
        if (world.place(other).floor != floor) continue;
        if (seen.insert(other).second) stack.push_back(other);
      }
    }
    if (seen.size() != members.size()) {
      problems.push_back("floor " + std::to_string(floor) + " is not connected");
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// World JSON

namespace {

json vec_json(const Vec3& v) { return json{{"x", v.x}, {"y", v.y}, {"z", v.z}}; }
json bbox_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

Vec3 vec_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()}; }
BBox bbox_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw WorldError("bbox must be [x, y, w, h]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string serialize_world(const SceneWorld& world) {
  json j;
  j["params"] = {{"num_floors", world.params.num_floors},
                 {"rooms_per_floor", world.params.rooms_per_floor},
                 {"objects_per_room", world.params.objects_per_room},
                 {"seed", world.params.seed}};
  json regions = json::array();
  for (const auto& r : world.regions) {
    regions.push_back({{"gt_id", r.gt_id}, {"class", r.class_name}, {"label", r.label}, {"floor", r.floor}});
  }
  j["regions"] = std::move(regions);
  json places = json::array();
  for (const auto& p : world.places) {
    json contents = json::array();
    for (const auto& e : p.contents) {
      contents.push_back({{"gt_id", e.gt_id},
                          {"label", e.label},
                          {"description", e.description},
                          {"size_class", e.size_class},
                          {"cluster", e.cluster},
                          {"bbox", bbox_json(e.bbox)}});
    }
    json views = json::array();
    for (const auto& v : p.connectors) {
      views.push_back({{"connector", v.connector}, {"cluster", v.cluster}, {"bbox", bbox_json(v.bbox)}});
    }
    places.push_back({{"gt_id", p.gt_id},
                      {"class", p.class_name},
                      {"label", p.label},
                      {"position", vec_json(p.position)},
                      {"floor", p.floor},
                      {"region", p.region},
                      {"contents", std::move(contents)},
                      {"connectors", std::move(views)}});
  }
  j["places"] = std::move(places);
  json connectors = json::array();
  for (const auto& c : world.connectors) {
    connectors.push_back({{"gt_id", c.gt_id},
                          {"class", c.class_name},
                          {"label", c.label},
                          {"description", c.description},
                          {"links", json::array({c.links[0], c.links[1]})},
                          {"position", vec_json(c.position)}});
  }
  j["connectors"] = std::move(connectors);
  json adjacency = json::array();
  for (const auto& c : world.connectors) adjacency.push_back(json::array({c.links[0], c.gt_id, c.links[1]}));
  j["adjacency"] = std::move(adjacency);
  json goals = json::object();
  for (const auto& [label, ids] : world.goal_instances()) goals[label] = ids;
  j["goal_instances"] = std::move(goals);
  return j.dump(2) + "\n";
}

SceneWorld deserialize_world(const std::string& text) {
  SceneWorld world;
  try {
    const json j = json::parse(text);
    const json& params = j.at("params");
    world.params.num_floors = params.at("num_floors").get<int>();
    world.params.rooms_per_floor = params.at("rooms_per_floor").get<int>();
    world.params.objects_per_room = params.at("objects_per_room").get<int>();
    world.params.seed = params.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("regions")) {
      world.regions.push_back({r.at("gt_id").get<std::string>(), r.at("class").get<std::string>(),
                               r.at("label").get<std::string>(), r.at("floor").get<int>()});
    }
    for (const auto& pj : j.at("places")) {
      WorldPlace p;
      p.gt_id = pj.at("gt_id").get<std::string>();
      p.class_name = pj.at("class").get<std::string>();
      p.label = pj.at("label").get<std::string>();
      p.position = vec_from(pj.at("position"));
      p.floor = pj.at("floor").get<int>();
      p.region = pj.value("region", std::string());
      for (const auto& ej : pj.at("contents")) {
        WorldEntity e;
        e.gt_id = ej.at("gt_id").get<std::string>();
        e.label = ej.at("label").get<std::string>();
        e.description = ej.value("description", std::string());
        e.size_class = ej.value("size_class", std::string("medium"));
        e.cluster = ej.at("cluster").get<int>();
        e.bbox = bbox_from(ej.at("bbox"));
        p.contents.push_back(std::move(e));
      }
      for (const auto& vj : pj.at("connectors")) {
        p.connectors.push_back({vj.at("connector").get<std::string>(), vj.at("cluster").get<int>(),
                                bbox_from(vj.at("bbox"))});
      }
      world.places.push_back(std::move(p));
    }
    for (const auto& cj : j.at("connectors")) {
      WorldConnector c;
      c.gt_id = cj.at("gt_id").get<std::string>();
      c.class_name = cj.at("class").get<std::string>();
      c.label = cj.at("label").get<std::string>();
      c.description = cj.value("description", std::string());
      const json& links = cj.at("links");
      if (!links.is_array() || links.size() != 2) throw WorldError("connector links must be a pair");
      c.links = {links[0].get<std::string>(), links[1].get<std::string>()};
      c.position = vec_from(cj.at("position"));
      world.connectors.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw WorldError(std::string("malformed world file: ") + e.what());
  }
  const auto problems = check_world(world);
  if (!problems.empty()) throw WorldError("invalid world: " + problems.front());
  return world;
}

SceneWorld load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw WorldError("cannot read world file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_world(ss.str());
}

// ---------------------------------------------------------------------------
// Metric routing

namespace {

/// Dijkstra over places and connectors; returns place -> distance.
std::map<std::string, double> distances_from(const SceneWorld& world, const std::string& source) {
  std::map<std::string, double> dist;
  using Item = std::pair<double, std::string>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    auto [d, cur] = queue.top();
    queue.pop();
    if (d > dist[cur]) continue;
    const WorldPlace& p = world.place(cur);
    for (const auto& [cid, other] : world.neighbours(cur)) {
      const WorldConnector& c = world.connector(cid);
      const double nd = d + distance(p.position, c.position) +
                        distance(c.position, world.place(other).position);
      auto it = dist.find(other);
      if (it == dist.end() || nd < it->second) {
        dist[other] = nd;
        queue.emplace(nd, other);
      }
    }
  }
  return dist;
}

bool holds_label(const WorldPlace& p, const std::string& goal, const SynonymTable& synonyms) {
  return std::any_of(p.contents.begin(), p.contents.end(),
                     [&](const WorldEntity& e) { return synonyms.equivalent(e.label, goal); });
}

}  // namespace

std::optional<double> metric_distance(const SceneWorld& world, const std::string& from,
                                      const std::string& to) {
  const auto dist = distances_from(world, from);
  auto it = dist.find(to);
  if (it == dist.end()) return std::nullopt;
  return it->second;
}

std::optional<double> distance_to_label(const SceneWorld& world, const std::string& from,
                                        const std::string& goal, const SynonymTable& synonyms) {
  const auto dist = distances_from(world, from);
  std::optional<double> best;
  for (const auto& p : world.places) {
    if (!holds_label(p, goal, synonyms)) continue;
    auto it = dist.find(p.gt_id);
    if (it != dist.end() && (!best || it->second < *best)) best = it->second;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Ground truth

GroundTruth ground_truth(const SceneWorld& world, const OsgSpec& spec) {
  GroundTruth gt;
  auto add = [&](const std::string& a, const std::string& ca, EdgeType type, const std::string& b,
                 const std::string& cb) {
    if (spec.permits(ca, type, cb)) gt.edges.emplace(a, type, b);
  };
  auto both = [&](const std::string& a, const std::string& ca, EdgeType type, const std::string& b,
                  const std::string& cb) {
    add(a, ca, type, b, cb);
    add(b, cb, type, a, ca);
  };
  const ClassSpec* object_cls = spec.object_class();
  const std::string object_class = object_cls != nullptr ? object_cls->name : "object";

  for (const auto& r : world.regions) gt.node_class[r.gt_id] = r.class_name;
  for (const auto& p : world.places) {
    gt.node_class[p.gt_id] = p.class_name;
    if (!p.region.empty()) {
      gt.place_region[p.gt_id] = p.region;
      add(p.region, world.regions.empty() ? kRegionClass : gt.node_class[p.region], EdgeType::Contains,
          p.gt_id, p.class_name);
    }
    for (const auto& e : p.contents) {
      gt.node_class[e.gt_id] = object_class;
      add(p.gt_id, p.class_name, EdgeType::Contains, e.gt_id, object_class);
    }
  }
  for (const auto& c : world.connectors) {
    gt.node_class[c.gt_id] = c.class_name;
    for (const auto& l : c.links) {
      const WorldPlace& p = world.place(l);
      both(p.gt_id, p.class_name, EdgeType::ConnectsTo, c.gt_id, c.class_name);
      if (!p.region.empty()) {
        both(p.region, gt.node_class[p.region], EdgeType::ConnectsTo, c.gt_id, c.class_name);
      }
    }
  }
  // A region reaches a connector only when the connector leaves the region.
  for (const auto& c : world.connectors) {
    const std::string& r0 = world.place(c.links[0]).region;
    const std::string& r1 = world.place(c.links[1]).region;
    if (r0 == r1 && !r0.empty()) {
      gt.edges.erase({r0, EdgeType::ConnectsTo, c.gt_id});
      gt.edges.erase({c.gt_id, EdgeType::ConnectsTo, r0});
    }
  }
  for (const auto& p : world.places) {
    struct Member {
      std::string id, cls;
      int cluster;
    };
    std::vector<Member> members;
    for (const auto& e : p.contents) members.push_back({e.gt_id, object_class, e.cluster});
    for (const auto& v : p.connectors) {
      members.push_back({v.connector, world.connector(v.connector).class_name, v.cluster});
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (members[i].cluster != members[j].cluster) continue;
        both(members[i].id, members[i].cls, EdgeType::IsNear, members[j].id, members[j].cls);
      }
    }
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Observation

void NoiseModel::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
  };
  prob(dropout_p, "dropout_p");
  prob(synonym_p, "synonym_p");
  prob(desc_perturb_p, "desc_perturb_p");
  if (!(spurious_rate >= 0.0) || !std::isfinite(spurious_rate)) {
    throw std::invalid_argument("spurious_rate must be non-negative");
  }
}

NoiseModel NoiseModel::default_profile() { return {0.1, 0.05, 0.1, 0.1, 0}; }

namespace {

constexpr std::size_t kTokenDraws = 4;

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

const std::vector<std::string>& description_vocabulary() {
  static const std::vector<std::string> v = [] {
    std::vector<std::string> all = kColours;
    all.insert(all.end(), kFinishes.begin(), kFinishes.end());
    all.insert(all.end(), kMaterials.begin(), kMaterials.end());
    return all;
  }();
  return v;
}

std::string other_word(const std::string& word, std::uint64_t pick) {
  const auto& vocab = description_vocabulary();
  std::vector<const std::string*> options;
  for (const auto& w : vocab) {
    if (w != word) options.push_back(&w);
  }
  return *options[pick % options.size()];
}

}  // namespace

Observation observe(const SceneWorld& world, const SimAgent& agent, const NoiseModel& noise,
                    const SynonymTable& synonyms, std::uint64_t stream_seed) {
  noise.validate();
  const WorldPlace& place = world.place(agent.place);
  Observation obs;
  obs.place_class = place.class_name;
  obs.place_label = place.label;
  obs.place_provenance = {{place.gt_id, 1}};

  SimRng rng(stream_seed);
  auto emit = [&](const std::string& gt, const std::string& label, const std::string& description,
                  const BBox& bbox) {
    const double u_drop = rng.uniform();
    const double u_syn = rng.uniform();
    const std::uint64_t syn_pick = rng.next();
    double u_tok[kTokenDraws];
    std::uint64_t tok_pick[kTokenDraws];
    for (std::size_t t = 0; t < kTokenDraws; ++t) {
      u_tok[t] = rng.uniform();
      tok_pick[t] = rng.next();
    }
    if (u_drop < noise.dropout_p) return;
    Detection d;
    d.label = label;
    if (u_syn < noise.synonym_p) {
      std::vector<std::string> alternatives;
      for (const auto& s : synonyms.group_of(label)) {
        if (s != label) alternatives.push_back(s);
      }
      if (!alternatives.empty()) d.label = alternatives[syn_pick % alternatives.size()];
    }
    auto words = split_words(description);
    for (std::size_t t = 0; t < words.size() && t < kTokenDraws; ++t) {
      if (u_tok[t] < noise.desc_perturb_p) words[t] = other_word(words[t], tok_pick[t]);
    }
    for (std::size_t t = 0; t < words.size(); ++t) {
      if (t > 0) d.description += " ";
      d.description += words[t];
    }
    d.bbox = bbox;
    d.provenance = {{gt, 1}};
    obs.detections.push_back(std::move(d));
  };
  for (const auto& e : place.contents) emit(e.gt_id, e.label, e.description, e.bbox);
  for (const auto& v : place.connectors) {
    const WorldConnector& c = world.connector(v.connector);
    emit(c.gt_id, c.label, c.description, v.bbox);
  }

  SimRng fake(mix_seed({stream_seed, 0x5b0}));
  const double whole = std::floor(noise.spurious_rate);
  std::size_t count = static_cast<std::size_t>(whole);
  if (fake.chance(noise.spurious_rate - whole)) ++count;
  for (std::size_t k = 0; k < count; ++k) {
    Detection d;
    d.label = clutter_labels()[fake.below(clutter_labels().size())];
    d.description = kColours[fake.below(kColours.size())] + " " +
                    kFinishes[fake.below(kFinishes.size())] + " " +
                    kMaterials[fake.below(kMaterials.size())];
    const double w = round1(fake.range(20.0, 30.0));
    const double h = round1(fake.range(20.0, 30.0));
    d.bbox = {round1(fake.range(0.0, obs.frame_width - w)), round1(fake.range(0.0, obs.frame_height - h)), w, h};
    obs.detections.push_back(std::move(d));
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Motion

MoveOutcome move_to(const SceneWorld& world, SimAgent& agent, const std::string& gt_target,
                    double failure_p, SimRng& rng) {
  const bool fail = rng.uniform() < failure_p;
  ++agent.steps;
  if (fail) return MoveOutcome::Failed;

  if (world.has_connector(gt_target)) {
    const WorldConnector& c = world.connector(gt_target);
    const auto dist = distances_from(world, agent.place);
    std::optional<double> best;
    std::string far_side;
    for (int side = 0; side < 2; ++side) {
      auto it = dist.find(c.links[side]);
      if (it == dist.end()) continue;
      const double total = it->second + distance(world.place(c.links[side]).position, c.position) +
                           distance(c.position, world.place(c.links[1 - side]).position);
      if (!best || total < *best) {
        best = total;
        far_side = c.links[1 - side];
      }
    }
    if (!best) return MoveOutcome::Failed;
    agent.path_length += *best;
    agent.place = far_side;
    return MoveOutcome::Reached;
  }
  const auto target_place = world.place_of(gt_target);
  if (!target_place) return MoveOutcome::Failed;
  const auto d = metric_distance(world, agent.place, *target_place);
  if (!d) return MoveOutcome::Failed;
  agent.path_length += *d;
  agent.place = *target_place;
  return MoveOutcome::Reached;
}

std::optional<std::string> majority_provenance(const Node& node) {
  std::optional<std::string> best;
  int best_count = 0;
  bool tied = false;
  for (const auto& [id, count] : node.provenance) {
    if (count > best_count) {
      best = id;
      best_count = count;
      tied = false;
    } else if (count == best_count) {
      tied = true;
    }
  }
  if (tied) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

std::optional<NodeId> connector_node(const Osg& graph, const std::optional<NodeId>& place,
                                     const std::string& gt) {
  if (place && graph.has_node(*place)) {
    for (const auto& leaf : place_leaves(graph, *place)) {
      if (graph.node(leaf).layer == 2 && majority_provenance(graph.node(leaf)) == gt) return leaf;
    }
  }
  for (const auto& n : graph.nodes()) {
    if (n.layer == 2 && majority_provenance(n) == gt) return n.id;
  }
  return std::nullopt;
}

}  // namespace

EpisodeResult run_episode(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                          const std::string& goal, SemanticOracle& oracle,
                          const SynonymTable& synonyms, const EpisodeConfig& config) {
  config.noise.validate();
  config.mapper.validate();
  SimRng rng(mix_seed({world.params.seed, config.seed}));
  const std::uint64_t start_pick = rng.next();
  SimAgent agent;
  agent.place = config.start_place.empty() ? world.places[start_pick % world.places.size()].gt_id
                                           : world.place(config.start_place).gt_id;

  EpisodeResult result;
  result.goal = goal;
  result.start_place = agent.place;
  result.shortest_length = distance_to_label(world, agent.place, goal, synonyms).value_or(0.0);

  Osg graph(spec);
  SearchTask task(goal);
  AgentState state;
  std::uint64_t views = 0;

  auto observe_and_map = [&](const std::optional<NodeId>& crossed) {
    const Observation obs = observe(world, agent, config.noise, synonyms,
                                    mix_seed({config.noise.seed, config.seed, views++}));
    const MapStepResult step = map_step(*spec, graph, state, obs, oracle, config.mapper, crossed);
    state = step.state;
    if (state.current_place) task.note_visit(*state.current_place);
    return std::any_of(obs.detections.begin(), obs.detections.end(),
                       [&](const Detection& d) { return synonyms.equivalent(d.label, goal); });
  };
  auto record = [&](const NodeId& node, Outcome outcome, const std::optional<NodeId>& place) {
    record_outcome(task, graph, node, outcome, place);
    result.trace.push_back({static_cast<int>(result.trace.size()), node.value, graph.node(node).label,
                            std::string(to_string(outcome)), agent.place});
  };
  auto move = [&](const NodeId& node) {
    ++result.hops;
    const auto gt = majority_provenance(graph.node(node));
    if (!gt) {
      ++agent.steps;
      rng.uniform();
      return MoveOutcome::Failed;
    }
    return move_to(world, agent, *gt, config.move_failure_p, rng);
  };

  bool seen = observe_and_map(std::nullopt);
  while (true) {
    if (seen) {
      std::optional<NodeId> target;
      if (state.current_place) {
        for (const auto& leaf : place_leaves(graph, *state.current_place)) {
          if (synonyms.equivalent(graph.node(leaf).label, goal)) {
            target = leaf;
            break;
          }
        }
      }
      if (target) {
        ++result.subgoals;
        const auto from = state.current_place;
        const MoveOutcome m = move(*target);
        record(*target, m == MoveOutcome::Reached ? Outcome::GoalFound : Outcome::Failed, from);
      }
      result.termination = "goal_found";
      break;
    }
    if (result.subgoals >= config.budget) {
      result.termination = "budget";
      break;
    }
    Plan plan;
    try {
      plan = plan_step(*spec, graph, task, state, oracle);
    } catch (const PlanError&) {
      result.termination = "exhausted";
      break;
    } catch (const OracleError& e) {
      if (e.kind() != OracleError::Kind::InvalidChoice && e.kind() != OracleError::Kind::Parse) throw;
      result.termination = "oracle_invalid";
      break;
    }
    ++result.subgoals;

    bool interrupted = false;
    for (std::size_t k = 1; k < plan.region_path.size(); ++k) {
      const NodeId& waypoint = plan.region_path[k];
      if (graph.node(waypoint).layer != 2) continue;
      const auto from = state.current_place;
      if (move(waypoint) == MoveOutcome::Failed) {
        record(waypoint, Outcome::Failed, from);
        interrupted = true;
        break;
      }
      record(waypoint, Outcome::Reached, from);
      seen = observe_and_map(waypoint);
      if (seen) {
        interrupted = true;
        break;
      }
      if (k + 1 < plan.region_path.size() && state.current_place != plan.region_path[k + 1]) {
        interrupted = true;  // localised somewhere unexpected: replan
        break;
      }
    }
    if (interrupted) continue;

    if (plan.subgoal && graph.has_node(*plan.subgoal) && graph.node(*plan.subgoal).layer == 1 &&
        state.current_place == plan.target) {
      const NodeId leaf = *plan.subgoal;
      const auto from = state.current_place;
      const MoveOutcome m = move(leaf);
      record(leaf, m == MoveOutcome::Reached ? Outcome::Reached : Outcome::Failed, from);
      if (m == MoveOutcome::Reached && from) task.failed[from->value].insert(leaf.value);
      seen = observe_and_map(std::nullopt);
    }
  }

  result.final_place = agent.place;
  result.success = holds_label(world.place(agent.place), goal, synonyms);
  result.path_length = agent.path_length;
  result.dtg = result.success ? 0.0 : distance_to_label(world, agent.place, goal, synonyms).value_or(0.0);
  result.graph_json = serialize_graph(graph);
  return result;
}

// ---------------------------------------------------------------------------
// Scripted mapping tours

Osg map_full_coverage(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                      SemanticOracle& oracle, const SynonymTable& synonyms,
                      const MapperConfig& mapper, const NoiseModel& noise, const StepHook& on_step) {
  Osg graph(spec);
  if (world.places.empty()) return graph;
  AgentState state;
  SimAgent agent{world.places.front().gt_id};
  std::uint64_t views = 0;
  auto map_here = [&](const std::optional<std::string>& crossed) {
    std::optional<NodeId> last;
    if (crossed) last = connector_node(graph, state.current_place, *crossed);
    const Observation obs = observe(world, agent, noise, synonyms, mix_seed({noise.seed, views++}));
    state = map_step(*spec, graph, state, obs, oracle, mapper, last).state;
    if (on_step) on_step(graph);
  };

  std::set<std::string> visited;
  std::function<void(const std::string&)> visit = [&](const std::string& here) {
    visited.insert(here);
    for (const auto& [conn, other] : world.neighbours(here)) {
      if (visited.count(other) != 0) continue;
      agent.place = other;
      map_here(conn);
      visit(other);
      agent.place = here;
      map_here(conn);
    }
  };
  map_here(std::nullopt);
  visit(agent.place);
  return graph;
}

Osg map_random_walk(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                    SemanticOracle& oracle, const SynonymTable& synonyms,
                    const MapperConfig& mapper, const NoiseModel& noise, int steps,
                    std::uint64_t seed, const StepHook& on_step) {
  Osg graph(spec);
  if (world.places.empty() || steps <= 0) return graph;
  SimRng rng(mix_seed({world.params.seed, seed, 0x3a1c}));
  AgentState state;
  SimAgent agent{world.places[rng.below(world.places.size())].gt_id};
  std::optional<std::string> crossed;
  for (int s = 0; s < steps; ++s) {
    std::optional<NodeId> last;
    if (crossed) last = connector_node(graph, state.current_place, *crossed);
    const Observation obs = observe(world, agent, noise, synonyms,
                                    mix_seed({noise.seed, seed, static_cast<std::uint64_t>(s)}));
    state = map_step(*spec, graph, state, obs, oracle, mapper, last).state;
    if (on_step) on_step(graph);
    const auto options = world.neighbours(agent.place);
    if (options.empty()) {
      crossed.reset();
      continue;
    }
    const auto& [conn, other] = options[rng.below(options.size())];
    crossed = conn;
    agent.place = other;
  }
  return graph;
}

}  // namespace osg
