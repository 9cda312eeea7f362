#pragma once

// Shared fixtures for the test binaries.

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <unistd.h>
#include <string>

#include "osg/graph.hpp"
#include "osg/oracle.hpp"
#include "osg/schema.hpp"

#ifndef OSG_SOURCE_DIR
#define OSG_SOURCE_DIR "."
#endif

namespace osg::test {

inline std::string source_path(const std::string& rel) { return std::string(OSG_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::shared_ptr<const OsgSpec> load_spec(const std::string& name) {
  return std::make_shared<const OsgSpec>(load_spec_file(source_path("data/specs/" + name + ".json")));
}

inline std::shared_ptr<const OsgSpec> homes() {
  static const auto spec = load_spec("homes");
  return spec;
}

inline const RuleOracleConfig& rule_config() {
  static const RuleOracleConfig cfg = RuleOracleConfig::load(source_path("data/oracle/rule_oracle.json"));
  return cfg;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("osg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = {}) const { return rel.empty() ? path_.string() : (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace osg::test
