// osg: spec validation, world generation, episode batches, evaluation and
// graph export.
//
// Exit codes: 0 success, 1 internal error (or an invalid spec under
// `spec validate`), 2 configuration error, 3 oracle backend failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "osg/cli.hpp"

namespace fs = std::filesystem;
using namespace osg;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kConfig = 2;
constexpr int kBackend = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + out_path + "'");
  out << text;
}

std::shared_ptr<const OsgSpec> load_valid_spec(const std::string& path) {
  std::shared_ptr<const OsgSpec> spec;
  try {
    spec = std::make_shared<const OsgSpec>(load_spec_file(path));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (auto diags = validate_spec(*spec); !diags.empty()) {
    throw ConfigError("spec '" + path + "' is invalid:\n" + format_diagnostics(diags));
  }
  return spec;
}

std::string default_spec() { return (fs::path(default_data_dir()) / "specs" / "homes.json").string(); }

/// Valid specs print "ok"; problems go to stderr and exit 1.
int cmd_spec_validate(const std::vector<std::string>& files) {
  int status = kOk;
  for (const auto& file : files) {
    try {
      const auto diags = validate_spec(load_spec_file(file));
      if (diags.empty()) {
        std::cout << file << ": ok\n";
      } else {
        std::cerr << file << ": " << diags.size() << " problem(s)\n" << format_diagnostics(diags);
        status = kInternal;
      }
    } catch (const std::exception& e) {
      std::string message = e.what();
      if (message.empty() || message.back() != '\n') message += '\n';
      std::cerr << file << ": " << message;
      status = kInternal;
    }
  }
  return status;
}

struct RunFlags {
  std::string config;
  std::string spec, world, oracle, rule_config, prompts, transcript, record, noise, out;
  std::vector<std::string> goals;
  std::optional<int> episodes, budget, jobs;
  std::optional<std::uint64_t> seed_base;
};

RunConfig merge_flags(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig::from_json("{}") : RunConfig::load(f.config);
  if (!f.spec.empty()) c.spec_path = f.spec;
  if (!f.world.empty()) c.world_path = f.world;
  if (!f.oracle.empty()) c.oracle.kind = parse_oracle_kind(f.oracle);
  if (!f.rule_config.empty()) c.oracle.rule_config = f.rule_config;
  if (!f.prompts.empty()) c.oracle.prompts_dir = f.prompts;
  if (!f.transcript.empty()) c.oracle.transcript = f.transcript;
  if (!f.record.empty()) c.oracle.record = f.record;
  if (f.noise == "default") {
    c.noise = NoiseModel::default_profile();
  } else if (f.noise == "none") {
    c.noise = NoiseModel{};
  } else if (!f.noise.empty()) {
    throw ConfigError("--noise must be default or none (use a config file for custom levels)");
  }
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.goals.empty()) c.goals = f.goals;
  if (f.episodes) c.episodes = *f.episodes;
  if (f.budget) c.budget = *f.budget;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.seed_base) c.seed_base = *f.seed_base;
  return c;
}

int cmd_run(const RunFlags& flags) {
  const RunConfig config = merge_flags(flags);
  const RunSummary summary = run_batch(config);
  std::cout << format_summary_table({{"run", summary.navigation}});
  std::cout << "wrote " << summary.files.size() << " files to " << config.out_dir << "\n";
  return kOk;
}

struct EvalFlags {
  std::string episodes_dir;
  std::string graph, world, spec, out;
};

int cmd_eval(const EvalFlags& f) {
  if (f.episodes_dir.empty() == f.graph.empty()) {
    throw ConfigError("eval needs exactly one of --episodes or --graph");
  }
  if (!f.graph.empty()) {
    if (f.world.empty()) throw ConfigError("--graph needs --world");
    const auto spec = load_valid_spec(f.spec.empty() ? default_spec() : f.spec);
    SceneWorld world;
    Osg graph(spec);
    try {
      world = load_world(f.world);
      graph = deserialize_graph(read_file(f.graph), spec);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    const GraphQualityReport report = graph_quality(graph, world, *spec);
    std::cout << format_quality_table(report);
    if (!f.out.empty()) emit(quality_to_json(report), f.out);
    return kOk;
  }

  if (!fs::is_directory(f.episodes_dir)) throw ConfigError("'" + f.episodes_dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(f.episodes_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no episode files in '" + f.episodes_dir + "'");
  std::vector<EpisodeResult> results;
  for (const auto& file : files) {
    try {
      results.push_back(episode_from_json(read_file(file.string())));
    } catch (const std::runtime_error& e) {
      throw ConfigError(file.string() + ": " + e.what());
    }
  }
  const NavigationSummary summary = summarize(results);
  std::cout << format_summary_table({{fs::path(f.episodes_dir).filename().string(), summary}});
  if (!f.out.empty()) emit(summary_to_json(summary), f.out);
  return kOk;
}

int cmd_graph_export(const std::string& file, const std::string& format, const std::string& spec_path,
                     const std::string& out) {
  const auto spec = load_valid_spec(spec_path.empty() ? default_spec() : spec_path);
  Osg graph(spec);
  try {
    graph = deserialize_graph(read_file(file), spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(file + ": " + e.what());
  }
  emit(format == "dot" ? render_dot(graph) : serialize_graph(graph), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open scene graph mapping and object-goal navigation toolkit"};
  app.require_subcommand(1);

  auto* spec_cmd = app.add_subcommand("spec", "Spec files");
  spec_cmd->require_subcommand(1);
  std::vector<std::string> spec_files;
  auto* validate = spec_cmd->add_subcommand("validate", "Check specs against the meta-structure");
  validate->add_option("files", spec_files, "Spec JSON files")->required()->check(CLI::ExistingFile);

  auto* world_cmd = app.add_subcommand("world", "Synthetic worlds");
  world_cmd->require_subcommand(1);
  WorldParams params;
  std::string world_out;
  auto* gen = world_cmd->add_subcommand("gen", "Generate a world");
  gen->add_option("--floors", params.num_floors, "Number of floors")->capture_default_str();
  gen->add_option("--rooms", params.rooms_per_floor, "Rooms per floor")->capture_default_str();
  gen->add_option("--objects", params.objects_per_room, "Objects per room")->capture_default_str();
  gen->add_option("--seed", params.seed, "Generator seed")->capture_default_str();
  gen->add_option("-o,--out", world_out, "Output file (stdout when omitted)");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a batch of navigation episodes");
  run->add_option("-c,--config", run_flags.config, "JSON run config")->check(CLI::ExistingFile);
  run->add_option("--spec", run_flags.spec, "Spec file");
  run->add_option("--world", run_flags.world, "World file (generated when omitted)");
  run->add_option("--oracle", run_flags.oracle, "rule, random, remote or replay");
  run->add_option("--rule-config", run_flags.rule_config, "Rule oracle table");
  run->add_option("--prompts", run_flags.prompts, "Prompt template directory");
  run->add_option("--transcript", run_flags.transcript, "Replay transcript");
  run->add_option("--record", run_flags.record, "Record remote exchanges to this transcript");
  run->add_option("--noise", run_flags.noise, "default or none");
  run->add_option("--goal", run_flags.goals, "Goal label (repeatable)");
  run->add_option("--episodes", run_flags.episodes, "Episode count");
  run->add_option("--seed-base", run_flags.seed_base, "First episode seed");
  run->add_option("--budget", run_flags.budget, "Subgoal budget per episode");
  run->add_option("--jobs", run_flags.jobs, "Worker threads");
  run->add_option("-o,--out", run_flags.out, "Output directory");

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Summarise episodes or score a graph");
  eval->add_option("--episodes", eval_flags.episodes_dir, "Directory of episode JSON files");
  eval->add_option("--graph", eval_flags.graph, "Graph JSON file to score");
  eval->add_option("--world", eval_flags.world, "World the graph was built in");
  eval->add_option("--spec", eval_flags.spec, "Spec file");
  eval->add_option("-o,--out", eval_flags.out, "JSON report path");

  auto* graph_cmd = app.add_subcommand("graph", "Graph files");
  graph_cmd->require_subcommand(1);
  std::string graph_file, graph_format = "json", graph_spec, graph_out;
  auto* exp = graph_cmd->add_subcommand("export", "Render a graph as json or dot");
  exp->add_option("file", graph_file, "Graph JSON file")->required()->check(CLI::ExistingFile);
  exp->add_option("-f,--format", graph_format, "json or dot")
      ->check(CLI::IsMember({"json", "dot"}))
      ->capture_default_str();
  exp->add_option("--spec", graph_spec, "Spec file");
  exp->add_option("-o,--out", graph_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (validate->parsed()) return cmd_spec_validate(spec_files);
    if (gen->parsed()) {
      SceneWorld world;
      try {
        world = generate_world(params);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      emit(serialize_world(world), world_out);
      return kOk;
    }
    if (run->parsed()) return cmd_run(run_flags);
    if (eval->parsed()) return cmd_eval(eval_flags);
    if (exp->parsed()) return cmd_graph_export(graph_file, graph_format, graph_spec, graph_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const OracleError& e) {
    if (e.kind() == OracleError::Kind::Config) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfig;
    }
    std::cerr << "oracle backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
