#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "osg/cli.hpp"
#include "support.hpp"

using namespace osg;
using nlohmann::json;
namespace fs = std::filesystem;

#ifndef OSG_BINARY
#define OSG_BINARY "osg"
#endif

namespace {

struct Invocation {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

/// Runs the osg binary with `args` (already shell-quoted where needed).
Invocation osg_cli(const std::string& args, const osg::test::TempDir& dir, const std::string& env = {}) {
  const std::string out = dir.str("stdout.txt");
  const std::string err = dir.str("stderr.txt");
  const std::string cmd =
      env + " " + quote(OSG_BINARY) + " " + args + " > " + quote(out) + " 2> " + quote(err);
  const int raw = std::system(cmd.c_str());
  Invocation inv;
  inv.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  inv.out = osg::test::slurp(out);
  inv.err = osg::test::slurp(err);
  return inv;
}

RunConfig small_run(const std::string& out_dir) {
  RunConfig c = RunConfig::from_json(R"({"world": {"floors": 2, "rooms_per_floor": 5, "objects_per_room": 5, "seed": 7},
                                         "episodes": 5, "noise": "none"})");
  c.out_dir = out_dir;
  return c;
}

void write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig d = RunConfig::from_json("{}");
  CHECK(d.spec_path.find("homes.json") != std::string::npos);
  CHECK(d.oracle.kind == OracleKind::Rule);
  CHECK(d.episodes == 1);
  CHECK(d.world_path.empty());
  CHECK_NOTHROW(d.validate());

  const RunConfig c = RunConfig::from_json(R"({
      "spec": "specs/x.json", "world": "w.json",
      "oracle": {"kind": "replay", "transcript": "t.json"},
      "noise": {"dropout_p": 0.25, "seed": 4},
      "mapper": {"beta_pix": 50, "nearness_rule": "both"},
      "goals": ["bed", "sofa"], "episodes": 3, "seed_base": 10, "budget": 9, "jobs": 2, "out": "res"})",
                                           "/base");
  CHECK(c.spec_path == "/base/specs/x.json");
  CHECK(c.world_path == "/base/w.json");
  CHECK(c.oracle.kind == OracleKind::Replay);
  CHECK(c.oracle.transcript == "/base/t.json");
  CHECK(c.noise.dropout_p == 0.25);
  CHECK(c.noise.seed == 4);
  CHECK(c.mapper.beta_pix == 50.0);
  CHECK(c.mapper.nearness_rule == NearnessRule::Both);
  CHECK(c.goals == std::vector<std::string>{"bed", "sofa"});
  CHECK(c.episodes == 3);
  CHECK(c.seed_base == 10);
  CHECK(c.budget == 9);
  CHECK(c.jobs == 2);
  CHECK(c.out_dir == "/base/res");
  CHECK(RunConfig::from_json(R"({"noise": "default"})").noise.dropout_p == NoiseModel::default_profile().dropout_p);

  CHECK_THROWS_AS(RunConfig::from_json("["), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("[]"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"episode": 3})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"oracle": "gpt"})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"noise": "loud"})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"mapper": {"nearness_rule": "neither"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"episodes": "many"})"), ConfigError);
  CHECK(parse_oracle_kind("random") == OracleKind::Random);
  CHECK_THROWS_AS(parse_oracle_kind("Rule"), ConfigError);
}

TEST_CASE("run config validation") {
  RunConfig c = RunConfig::from_json("{}");
  auto rejects = [](RunConfig bad) { CHECK_THROWS_AS(bad.validate(), ConfigError); };
  RunConfig bad = c;
  bad.spec_path = "/no/such/spec.json";
  rejects(bad);
  bad = c;
  bad.world_path = "/no/such/world.json";
  rejects(bad);
  bad = c;
  bad.episodes = 0;
  rejects(bad);
  bad = c;
  bad.budget = 0;
  rejects(bad);
  bad = c;
  bad.jobs = 0;
  rejects(bad);
  bad = c;
  bad.move_failure_p = 1.5;
  rejects(bad);
  bad = c;
  bad.noise.dropout_p = -0.1;
  rejects(bad);
  bad = c;
  bad.mapper.beta_pix = -1;
  rejects(bad);
  bad = c;
  bad.oracle.kind = OracleKind::Replay;
  rejects(bad);
  bad = c;
  bad.oracle.kind = OracleKind::Remote;
  ::unsetenv("OSG_LLM_ENDPOINT");
  rejects(bad);
}

TEST_CASE("a noiseless batch succeeds and writes its artifacts") {
  osg::test::TempDir dir("batch");
  const RunSummary s = run_batch(small_run(dir.str("out")));
  CHECK(s.navigation.episodes == 5);
  CHECK(s.navigation.success_rate == 1.0);
  CHECK(s.files.size() == 11);
  for (int e = 0; e < 5; ++e) {
    const std::string name = "episode_000" + std::to_string(e) + ".json";
    CHECK(fs::is_regular_file(dir.str("out/episodes/" + name)));
    CHECK(fs::is_regular_file(dir.str("out/graphs/" + name)));
    CHECK(episode_from_json(osg::test::slurp(dir.str("out/episodes/" + name))).success);
  }
  const json report = json::parse(osg::test::slurp(dir.str("out/report.json")));
  CHECK(report.at("summary").at("success_rate") == 1.0);
  CHECK(report.at("metadata").contains("created_at"));
  CHECK(report.at("episodes").size() == 5);
}

TEST_CASE("worker count does not change the artifacts") {
  osg::test::TempDir dir("jobs");
  RunConfig one = small_run(dir.str("one"));
  one.noise = NoiseModel::default_profile();
  one.episodes = 6;
  RunConfig four = one;
  four.out_dir = dir.str("four");
  four.jobs = 4;
  run_batch(one);
  run_batch(four);
  for (const auto& entry : fs::recursive_directory_iterator(dir.str("one"))) {
    if (!entry.is_regular_file() || entry.path().filename() == "report.json") continue;
    const auto rel = fs::relative(entry.path(), dir.str("one"));
    CAPTURE(rel.string());
    CHECK(osg::test::slurp(entry.path().string()) == osg::test::slurp((fs::path(dir.str("four")) / rel).string()));
  }
}

TEST_CASE("batch errors") {
  osg::test::TempDir dir("errors");
  RunConfig c = small_run(dir.str("out"));
  c.spec_path = "/no/such/spec.json";
  CHECK_THROWS_AS(run_batch(c), ConfigError);

  c = small_run(dir.str("out"));
  write(dir.str("bad_spec.json"), R"({"name": "broken"})");
  c.spec_path = dir.str("bad_spec.json");
  CHECK_THROWS_AS(run_batch(c), ConfigError);

  c = small_run(dir.str("out"));
  write(dir.str("bad_world.json"), "{}");
  c.world_path = dir.str("bad_world.json");
  CHECK_THROWS_AS(run_batch(c), ConfigError);

  c = small_run(dir.str("out"));
  write(dir.str("empty.json"), R"({"entries": []})");
  c.oracle.kind = OracleKind::Replay;
  c.oracle.transcript = dir.str("empty.json");
  try {
    run_batch(c);
    FAIL("expected a replay miss");
  } catch (const OracleError& e) {
    CHECK(e.kind() == OracleError::Kind::ReplayMiss);
  }
}

TEST_CASE("exit codes") {
  osg::test::TempDir dir("exit");
  const std::string data = osg::test::source_path("data");

  auto ok = osg_cli("spec validate " + quote(data + "/specs/homes.json") + " " + quote(data + "/specs/mall.json"), dir);
  CHECK(ok.status == 0);
  CHECK(ok.out.find("homes.json: ok") != std::string::npos);

  write(dir.str("broken.json"), R"({"name": "broken", "layers": []})");
  CHECK(osg_cli("spec validate " + quote(dir.str("broken.json")), dir).status == 1);
  CHECK(osg_cli("spec validate /no/such/file.json", dir).status == 2);

  CHECK(osg_cli("run --spec /no/such/spec.json --episodes 1 -o " + quote(dir.str("r")), dir).status == 2);
  CHECK(osg_cli("run --episodes 0 -o " + quote(dir.str("r")), dir).status == 2);
  CHECK(osg_cli("run --oracle psychic", dir).status == 2);
  CHECK(osg_cli("frobnicate", dir).status == 2);
  CHECK(osg_cli("run --oracle remote -o " + quote(dir.str("r")), dir, "OSG_LLM_ENDPOINT=").status == 2);

  write(dir.str("empty.json"), R"({"entries": []})");
  const auto miss = osg_cli("run --oracle replay --transcript " + quote(dir.str("empty.json")) + " --episodes 1 -o " +
                                quote(dir.str("r")),
                            dir);
  CHECK(miss.status == 3);
  CHECK(miss.err.find("digest") != std::string::npos);
  const auto at = miss.err.find("digest ");
  REQUIRE(at != std::string::npos);
  const std::string digest = miss.err.substr(at + 7, 16);
  CHECK(digest.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("world generation, runs and evaluation through the binary") {
  osg::test::TempDir dir("flow");
  REQUIRE(osg_cli("world gen --floors 1 --rooms 4 --objects 4 --seed 3 -o " + quote(dir.str("world.json")), dir).status ==
          0);
  CHECK(deserialize_world(osg::test::slurp(dir.str("world.json"))).places.size() == 4);
  CHECK(osg_cli("world gen --rooms 0", dir).status == 2);

  const auto run = osg_cli("run --world " + quote(dir.str("world.json")) + " --noise none --episodes 3 -o " +
                               quote(dir.str("out")),
                           dir);
  REQUIRE(run.status == 0);
  CHECK(run.out.find("SPL") != std::string::npos);

  const auto eval = osg_cli("eval --episodes " + quote(dir.str("out/episodes")) + " -o " + quote(dir.str("sum.json")), dir);
  CHECK(eval.status == 0);
  CHECK(json::parse(osg::test::slurp(dir.str("sum.json"))).at("episodes") == 3);

  const auto quality = osg_cli("eval --graph " + quote(dir.str("out/graphs/episode_0000.json")) + " --world " +
                                   quote(dir.str("world.json")) + " -o " + quote(dir.str("q.json")),
                               dir);
  CHECK(quality.status == 0);
  CHECK(json::parse(osg::test::slurp(dir.str("q.json"))).contains("nodes"));
  CHECK(osg_cli("eval --graph " + quote(dir.str("out/graphs/episode_0000.json")), dir).status == 2);
  CHECK(osg_cli("eval --episodes /no/such/dir", dir).status == 2);

  const auto dot = osg_cli("graph export -f dot " + quote(dir.str("out/graphs/episode_0000.json")), dir);
  CHECK(dot.status == 0);
  CHECK(dot.out.rfind("digraph osg {", 0) == 0);
  const auto again = osg_cli("graph export " + quote(dir.str("out/graphs/episode_0000.json")), dir);
  CHECK(again.status == 0);
  CHECK(again.out == osg::test::slurp(dir.str("out/graphs/episode_0000.json")));
  CHECK(osg_cli("graph export -f svg " + quote(dir.str("world.json")), dir).status == 2);
}

TEST_CASE("graph export of an empty graph") {
  osg::test::TempDir dir("export");
  write(dir.str("empty.json"), serialize_graph(Osg(osg::test::homes())));
  const auto dot = osg_cli("graph export --format dot " + quote(dir.str("empty.json")), dir);
  CHECK(dot.status == 0);
  CHECK(dot.out == "digraph osg {\n  rankdir=BT;\n}\n");
}

TEST_CASE("config files drive runs") {
  osg::test::TempDir dir("config");
  write(dir.str("run.json"), R"({"world": {"floors": 1, "rooms_per_floor": 3, "objects_per_room": 3, "seed": 2},
                                 "noise": {"dropout_p": 0.1, "seed": 1}, "episodes": 2, "out": "results"})");
  REQUIRE(osg_cli("run -c " + quote(dir.str("run.json")), dir).status == 0);
  CHECK(fs::is_regular_file(dir.str("results/report.json")));
  const json report = json::parse(osg::test::slurp(dir.str("results/report.json")));
  CHECK(report.at("config").at("noise").at("dropout_p") == 0.1);
}
