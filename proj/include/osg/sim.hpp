#pragma once

// Synthetic multi-storey homes: ground-truth worlds with metric positions, a
// noisy observation channel and topological motion standing in for the
// low-level controller.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "osg/episode.hpp"
#include "osg/graph.hpp"
#include "osg/mapper.hpp"
#include "osg/oracle.hpp"
#include "osg/schema.hpp"

namespace osg {

/// Seeded stream with portable integer and real conversions (the standard
/// distributions are implementation-defined).
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n); n must be positive.
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }
  bool chance(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Combines seeds into one stream seed (splitmix64 finaliser).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

struct WorldEntity {
  std::string gt_id;
  std::string label;
  std::string description;
  std::string size_class;  // small, medium, large
  int cluster = 0;         // entities sharing a cluster are near each other
  BBox bbox;
};

/// A connector as seen from one of the places it links.
struct ConnectorView {
  std::string connector;
  int cluster = 0;
  BBox bbox;
};

struct WorldPlace {
  std::string gt_id;
  std::string class_name;
  std::string label;
  Vec3 position;
  int floor = 0;
  std::string region;  // gt id of the enclosing floor
  std::vector<WorldEntity> contents;
  std::vector<ConnectorView> connectors;
};

struct WorldConnector {
  std::string gt_id;
  std::string class_name;
  std::string label;
  std::string description;
  std::array<std::string, 2> links;  // place gt ids
  Vec3 position;
};

struct WorldRegion {
  std::string gt_id;
  std::string class_name;
  std::string label;
  int floor = 0;
};

struct WorldParams {
  int num_floors = 2;
  int rooms_per_floor = 10;
  int objects_per_room = 6;
  std::uint64_t seed = 1;
};

class WorldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneWorld {
  WorldParams params;
  std::vector<WorldRegion> regions;
  std::vector<WorldPlace> places;
  std::vector<WorldConnector> connectors;

  const WorldPlace& place(const std::string& gt_id) const;
  const WorldConnector& connector(const std::string& gt_id) const;
  bool has_place(const std::string& gt_id) const;
  bool has_connector(const std::string& gt_id) const;
  /// Place holding an object, or the gt id itself for a place.
  std::optional<std::string> place_of(const std::string& gt_id) const;
  /// (connector, place on the other side) pairs of a place, in connector order.
  std::vector<std::pair<std::string, std::string>> neighbours(const std::string& place) const;
  /// Goal label -> object gt ids, over every object label in the world.
  std::map<std::string, std::vector<std::string>> goal_instances() const;
};

/// Labels episodes may ask for; hint objects never use them.
const std::vector<std::string>& homes_goal_labels();

/// Deterministic for a seed. Room labels come from the homes vocabulary;
/// rooms on a floor form a tree of doors and consecutive floors are joined
/// by one staircase. Throws std::invalid_argument on non-positive sizes.
SceneWorld generate_world(const WorldParams& params);

/// Broken invariants, empty when the world is sound.
std::vector<std::string> check_world(const SceneWorld& world);

std::string serialize_world(const SceneWorld& world);
/// Throws WorldError on malformed input or broken invariants.
SceneWorld deserialize_world(const std::string& text);
SceneWorld load_world(const std::string& path);

/// Shortest metric distance between two places along the world adjacency;
/// nullopt when disconnected.
std::optional<double> metric_distance(const SceneWorld& world, const std::string& from,
                                      const std::string& to);
/// Metric distance to the nearest place holding an instance of `goal`.
std::optional<double> distance_to_label(const SceneWorld& world, const std::string& from,
                                        const std::string& goal, const SynonymTable& synonyms);

struct GroundTruth {
  std::map<std::string, std::string> node_class;  // gt id -> class name
  std::set<std::tuple<std::string, EdgeType, std::string>> edges;
  std::map<std::string, std::string> place_region;  // place gt id -> floor gt id
};

/// Annotated graph of a world; edges are listed in every direction the OsgSpec
/// permits.
GroundTruth ground_truth(const SceneWorld& world, const OsgSpec& spec);

struct NoiseModel {
  double dropout_p = 0.0;
  double spurious_rate = 0.0;
  double synonym_p = 0.0;
  double desc_perturb_p = 0.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when a probability leaves [0,1] or the
  /// spurious rate is negative.
  void validate() const;
  /// Moderate noise used by benchmark episodes.
  static NoiseModel default_profile();
};

struct SimAgent {
  std::string place;
  double path_length = 0.0;
  int steps = 0;
};

/// Detections of the agent's place under `noise`. Each true entity consumes a
/// fixed number of draws, so runs that differ only in noise levels see
/// coupled outcomes for the same `stream_seed`.
Observation observe(const SceneWorld& world, const SimAgent& agent, const NoiseModel& noise,
                    const SynonymTable& synonyms, std::uint64_t stream_seed);

enum class MoveOutcome { Reached, Failed };

/// Moves to a ground-truth target: a connector is crossed (from the nearer
/// side), an object or place is reached by the shortest route. One draw is
/// consumed for the failure roll.
MoveOutcome move_to(const SceneWorld& world, SimAgent& agent, const std::string& gt_target,
                    double failure_p, SimRng& rng);

/// Majority ground-truth id of a node; nullopt when absent or tied.
std::optional<std::string> majority_provenance(const Node& node);

struct EpisodeConfig {
  MapperConfig mapper;
  NoiseModel noise;
  int budget = 50;
  double move_failure_p = 0.0;
  std::uint64_t seed = 0;
  std::string start_place;  // random when empty
};

EpisodeResult run_episode(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                          const std::string& goal, SemanticOracle& oracle,
                          const SynonymTable& synonyms, const EpisodeConfig& config);

using StepHook = std::function<void(const Osg&)>;

/// Depth-first tour through every place and back, mapping each arrival.
Osg map_full_coverage(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                      SemanticOracle& oracle, const SynonymTable& synonyms,
                      const MapperConfig& mapper, const NoiseModel& noise,
                      const StepHook& on_step = {});

/// `steps` mapper steps along a random walk from a random start.
Osg map_random_walk(const SceneWorld& world, std::shared_ptr<const OsgSpec> spec,
                    SemanticOracle& oracle, const SynonymTable& synonyms,
                    const MapperConfig& mapper, const NoiseModel& noise, int steps,
                    std::uint64_t seed, const StepHook& on_step = {});

}  // namespace osg
