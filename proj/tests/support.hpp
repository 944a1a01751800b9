#pragma once

// Shared test helpers: source-tree paths, scratch directories and the
// shipped configuration.

#include <filesystem>
#include <string>

#include "emr/config.hpp"

namespace support {

namespace fs = std::filesystem;

inline fs::path source(const std::string& rel) { return fs::path(EMR_SOURCE_DIR) / rel; }

inline fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emr_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline emr::RunConfig default_config(const std::vector<std::string>& overrides = {}) {
  return emr::load_run_config(source("config/default.ini"), overrides);
}

// Same anatomy at 32^3: fast enough for unit tests.
inline emr::RunConfig small_config(std::vector<std::string> overrides = {}) {
  overrides.insert(overrides.begin(), "phantom.dims=32 32 32");
  return default_config(overrides);
}

}  // namespace support
