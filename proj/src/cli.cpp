#include "osg/cli.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "osg/remote.hpp"

#ifndef OSG_DATA_DIR
#define OSG_DATA_DIR "data"
#endif

namespace osg {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

OracleKind parse_oracle_kind(const std::string& s) {
  if (s == "rule") return OracleKind::Rule;
  if (s == "random") return OracleKind::Random;
  if (s == "remote") return OracleKind::Remote;
  if (s == "replay") return OracleKind::Replay;
  throw ConfigError("oracle kind must be rule, random, remote or replay, got '" + s + "'");
}

namespace {

std::string kind_name(OracleKind k) {
  switch (k) {
    case OracleKind::Rule: return "rule";
    case OracleKind::Random: return "random";
    case OracleKind::Remote: return "remote";
    case OracleKind::Replay: return "replay";
  }
  return "rule";
}

NoiseModel parse_noise(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "default") return NoiseModel::default_profile();
    if (s == "none") return NoiseModel{};
    throw ConfigError("noise must be \"default\", \"none\" or an object");
  }
  reject_unknown(j, {"dropout_p", "spurious_rate", "synonym_p", "desc_perturb_p", "seed"}, "noise");
  NoiseModel n;
  n.dropout_p = j.value("dropout_p", 0.0);
  n.spurious_rate = j.value("spurious_rate", 0.0);
  n.synonym_p = j.value("synonym_p", 0.0);
  n.desc_perturb_p = j.value("desc_perturb_p", 0.0);
  n.seed = j.value("seed", std::uint64_t{0});
  return n;
}

MapperConfig parse_mapper(const json& j) {
  reject_unknown(j, {"beta_pix", "beta_iou", "min_object_area", "nearness_rule"}, "mapper");
  MapperConfig m;
  m.beta_pix = j.value("beta_pix", m.beta_pix);
  m.beta_iou = j.value("beta_iou", m.beta_iou);
  m.min_object_area = j.value("min_object_area", m.min_object_area);
  const auto rule = j.value("nearness_rule", std::string("either"));
  if (rule == "either") {
    m.nearness_rule = NearnessRule::Either;
  } else if (rule == "both") {
    m.nearness_rule = NearnessRule::Both;
  } else {
    throw ConfigError("nearness_rule must be \"either\" or \"both\"");
  }
  return m;
}

json config_echo(const RunConfig& c) {
  json world;
  if (!c.world_path.empty()) {
    world = c.world_path;
  } else {
    world = {{"floors", c.world_params.num_floors},
             {"rooms_per_floor", c.world_params.rooms_per_floor},
             {"objects_per_room", c.world_params.objects_per_room},
             {"seed", c.world_params.seed}};
  }
  return {{"spec", c.spec_path},
          {"world", world},
          {"oracle", kind_name(c.oracle.kind)},
          {"noise",
           {{"dropout_p", c.noise.dropout_p},
            {"spurious_rate", c.noise.spurious_rate},
            {"synonym_p", c.noise.synonym_p},
            {"desc_perturb_p", c.noise.desc_perturb_p},
            {"seed", c.noise.seed}}},
          {"episodes", c.episodes},
          {"seed_base", c.seed_base},
          {"budget", c.budget},
          {"move_failure_p", c.move_failure_p}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string episode_name(int e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%04d.json", e);
  return buf;
}

/// Builds one oracle per episode; remote backends are shared.
class OracleFactory {
 public:
  explicit OracleFactory(const RunConfig& c) : config_(c), rules_(RuleOracleConfig::load(c.oracle.rule_config)) {
    if (c.oracle.kind == OracleKind::Remote || c.oracle.kind == OracleKind::Replay) {
      prompts_ = PromptLibrary::load(c.oracle.prompts_dir);
      if (c.oracle.kind == OracleKind::Replay) {
        backend_ = std::make_shared<ReplayChatBackend>(c.oracle.transcript);
      } else {
        backend_ = std::make_shared<HttpChatBackend>(HttpBackendConfig::from_env());
        if (!c.oracle.record.empty()) {
          backend_ = std::make_shared<RecordingChatBackend>(backend_, c.oracle.record);
        }
      }
    }
  }

  const SynonymTable& synonyms() const { return rules_.synonyms; }

  std::unique_ptr<SemanticOracle> make(std::uint64_t seed) const {
    switch (config_.oracle.kind) {
      case OracleKind::Rule: return std::make_unique<RuleOracle>(rules_);
      case OracleKind::Random: return std::make_unique<RandomChoiceOracle>(rules_, seed);
      case OracleKind::Remote:
      case OracleKind::Replay:
        return std::make_unique<RemoteOracle>(prompts_, backend_, RemoteOracleConfig::from_env());
    }
    return nullptr;
  }

 private:
  const RunConfig& config_;
  RuleOracleConfig rules_;
  PromptLibrary prompts_;
  std::shared_ptr<ChatBackend> backend_;
};

}  // namespace

std::string default_data_dir() {
  if (const char* env = std::getenv("OSG_DATA_DIR"); env && *env) return env;
  return OSG_DATA_DIR;
}

RunConfig RunConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    reject_unknown(j,
                   {"spec", "world", "oracle", "noise", "mapper", "goals", "episodes", "seed_base",
                    "budget", "move_failure_p", "jobs", "out"},
                   "run config");
    RunConfig c;
    const std::string data = default_data_dir();
    c.spec_path = j.contains("spec") ? resolve(j["spec"].get<std::string>(), base_dir)
                                     : (fs::path(data) / "specs" / "homes.json").string();
    c.oracle.rule_config = (fs::path(data) / "oracle" / "rule_oracle.json").string();
    c.oracle.prompts_dir = (fs::path(data) / "prompts").string();
    if (j.contains("world")) {
      const json& w = j["world"];
      if (w.is_string()) {
        c.world_path = resolve(w.get<std::string>(), base_dir);
      } else {
        reject_unknown(w, {"floors", "rooms_per_floor", "objects_per_room", "seed"}, "world");
        c.world_params.num_floors = w.value("floors", c.world_params.num_floors);
        c.world_params.rooms_per_floor = w.value("rooms_per_floor", c.world_params.rooms_per_floor);
        c.world_params.objects_per_room = w.value("objects_per_room", c.world_params.objects_per_room);
        c.world_params.seed = w.value("seed", c.world_params.seed);
      }
    }
    if (j.contains("oracle")) {
      const json& o = j["oracle"];
      if (o.is_string()) {
        c.oracle.kind = parse_oracle_kind(o.get<std::string>());
      } else {
        reject_unknown(o, {"kind", "rule_config", "prompts", "transcript", "record"}, "oracle");
        c.oracle.kind = parse_oracle_kind(o.value("kind", std::string("rule")));
        if (o.contains("rule_config")) c.oracle.rule_config = resolve(o["rule_config"], base_dir);
        if (o.contains("prompts")) c.oracle.prompts_dir = resolve(o["prompts"], base_dir);
        if (o.contains("transcript")) c.oracle.transcript = resolve(o["transcript"], base_dir);
        if (o.contains("record")) c.oracle.record = resolve(o["record"], base_dir);
      }
    }
    if (j.contains("noise")) c.noise = parse_noise(j["noise"]);
    if (j.contains("mapper")) c.mapper = parse_mapper(j["mapper"]);
    if (j.contains("goals")) c.goals = j["goals"].get<std::vector<std::string>>();
    c.episodes = j.value("episodes", c.episodes);
    c.seed_base = j.value("seed_base", c.seed_base);
    c.budget = j.value("budget", c.budget);
    c.move_failure_p = j.value("move_failure_p", c.move_failure_p);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("out")) c.out_dir = resolve(j["out"].get<std::string>(), base_dir);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::string& path) {
  return from_json(read_file(path), fs::path(path).parent_path().string());
}

void RunConfig::validate() const {
  auto need_file = [](const std::string& path, const char* what) {
    if (path.empty() || !fs::is_regular_file(path)) {
      throw ConfigError(std::string(what) + " '" + path + "' does not exist");
    }
  };
  need_file(spec_path, "spec file");
  if (!world_path.empty()) need_file(world_path, "world file");
  need_file(oracle.rule_config, "rule oracle config");
  if (oracle.kind == OracleKind::Remote || oracle.kind == OracleKind::Replay) {
    if (!fs::is_directory(oracle.prompts_dir)) {
      throw ConfigError("prompt directory '" + oracle.prompts_dir + "' does not exist");
    }
  }
  if (oracle.kind == OracleKind::Replay) need_file(oracle.transcript, "replay transcript");
  if (oracle.kind == OracleKind::Remote && HttpBackendConfig::from_env().endpoint.empty()) {
    throw ConfigError("oracle=remote requires OSG_LLM_ENDPOINT");
  }
  if (episodes < 1) throw ConfigError("episodes must be positive");
  if (budget < 1) throw ConfigError("budget must be positive");
  if (jobs < 1) throw ConfigError("jobs must be positive");
  if (move_failure_p < 0.0 || move_failure_p > 1.0) throw ConfigError("move_failure_p must lie in [0,1]");
  try {
    noise.validate();
    mapper.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunSummary run_batch(const RunConfig& config) {
  config.validate();
  std::shared_ptr<const OsgSpec> spec;
  try {
    spec = std::make_shared<const OsgSpec>(load_spec_file(config.spec_path));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (auto diags = validate_spec(*spec); !diags.empty()) {
    throw ConfigError("spec '" + config.spec_path + "' is invalid:\n" + format_diagnostics(diags));
  }
  SceneWorld world;
  try {
    world = config.world_path.empty() ? generate_world(config.world_params) : load_world(config.world_path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::unique_ptr<OracleFactory> factory;
  try {
    factory = std::make_unique<OracleFactory>(config);
  } catch (const OracleError& e) {
    if (e.kind() == OracleError::Kind::Config) throw ConfigError(e.what());
    throw;
  } catch (const PromptError& e) {
    throw ConfigError(e.what());
  }

  std::vector<std::string> present;
  const auto instances = world.goal_instances();
  for (const auto& g : homes_goal_labels()) {
    if (instances.count(g) != 0) present.push_back(g);
  }
  const std::vector<std::string>& goals = config.goals.empty() ? present : config.goals;
  if (goals.empty()) throw ConfigError("no goal labels to search for");

  const int n = config.episodes;
  std::vector<EpisodeResult> results(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int e = next++; e < n; e = next++) {
      try {
        const std::uint64_t seed = config.seed_base + static_cast<std::uint64_t>(e);
        EpisodeConfig ec;
        ec.mapper = config.mapper;
        ec.noise = config.noise;
        ec.noise.seed = config.noise.seed + seed;
        ec.budget = config.budget;
        ec.move_failure_p = config.move_failure_p;
        ec.seed = seed;
        auto oracle = factory->make(seed);
        const std::string& goal = goals[static_cast<std::size_t>(e) % goals.size()];
        results[e] = run_episode(world, spec, goal, *oracle, factory->synonyms(), ec);
      } catch (...) {
        errors[e] = std::current_exception();
      }
    }
  };
  const int threads = std::min(config.jobs, n);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  RunSummary summary;
  const fs::path out(config.out_dir);
  json index = json::array();
  for (int e = 0; e < n; ++e) {
    const std::string name = episode_name(e);
    write_file(out / "episodes" / name, episode_to_json(results[e]));
    write_file(out / "graphs" / name, results[e].graph_json);
    summary.files.push_back("episodes/" + name);
    summary.files.push_back("graphs/" + name);
    index.push_back({{"episode", e},
                     {"goal", results[e].goal},
                     {"success", results[e].success},
                     {"termination", results[e].termination},
                     {"file", "episodes/" + name}});
  }
  summary.navigation = summarize(results);
  json report{{"metadata", {{"created_at", utc_timestamp()}}},
              {"config", config_echo(config)},
              {"summary", json::parse(summary_to_json(summary.navigation))},
              {"episodes", std::move(index)}};
  write_file(out / "report.json", report.dump(2) + "\n");
  summary.files.push_back("report.json");
  return summary;
}

}  // namespace osg
