#pragma once

// Batch runs driven by the osg command line: configuration loading, episode
// fan-out and artifact writing.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "osg/eval.hpp"
#include "osg/sim.hpp"

namespace osg {

/// Bad flags, unreadable files or an inconsistent configuration (exit 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OracleKind { Rule, Random, Remote, Replay };

/// "rule", "random", "remote" or "replay"; throws ConfigError otherwise.
OracleKind parse_oracle_kind(const std::string& text);

struct OracleSelection {
  OracleKind kind = OracleKind::Rule;
  std::string rule_config;  // synonyms and priors; also the simulator's synonym table
  std::string prompts_dir;
  std::string transcript;   // replay input
  std::string record;       // remote: transcript written alongside
};

struct RunConfig {
  std::string spec_path;
  std::string world_path;  // empty: generate from world_params
  WorldParams world_params;
  OracleSelection oracle;
  NoiseModel noise;
  MapperConfig mapper;
  std::vector<std::string> goals;  // empty: goal labels present in the world, in turn
  int episodes = 1;
  std::uint64_t seed_base = 0;
  int budget = 50;
  double move_failure_p = 0.0;
  int jobs = 1;
  std::string out_dir = "osg_out";

  /// Paths in the file are resolved against `base_dir` when relative.
  static RunConfig from_json(const std::string& text, const std::string& base_dir = {});
  static RunConfig load(const std::string& path);
  /// Throws ConfigError naming the first problem.
  void validate() const;
};

/// Default locations of the shipped data files.
std::string default_data_dir();

struct RunSummary {
  NavigationSummary navigation;
  std::vector<std::string> files;  // written artifacts, relative to out_dir
};

/// Runs the batch and writes episodes/episode_NNNN.json,
/// graphs/episode_NNNN.json and report.json under out_dir. Only
/// report.json's "metadata" object carries wall-clock data. Oracle backend
/// failures surface as OracleError.
RunSummary run_batch(const RunConfig& config);

}  // namespace osg
