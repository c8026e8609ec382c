#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bangbang/control.hpp"
#include "bangbang/correction.hpp"
#include "bangbang/dynamics.hpp"
#include "bangbang/propagation.hpp"
#include "bangbang/robustness.hpp"

namespace bangbang::cli {

using json = nlohmann::json;

struct NominalSettings {
  NominalSearch search;
  /// Precomputed nominal used by the downstream commands instead of a search.
  std::optional<BangBangControl> control;
};

struct RobustifySettings {
  std::size_t needles = 3;
  SearchMode mode = SearchMode::exhaustive;
  std::vector<std::size_t> greedy_prefix;  ///< 0-based
  CostWeights weights{};
  std::size_t grid_samples = 200;
};

enum class TrackSource { nominal, robustified };

struct TrackingSettings {
  TrackSource source = TrackSource::robustified;
  std::optional<BangBangControl> control;
  std::size_t checkpoints = 20;
  double drift_threshold = 1e-12;
  double damping = 1.0;
};

struct SweepSettings {
  std::vector<std::size_t> needles{1, 2, 3};
  std::size_t per_needle_count = 2;
  std::vector<double> epsilon_grid;
};

struct ExperimentConfig {
  RigidBodyParams model;
  PerturbationSpec perturbation;
  Vector x0;
  Vector target;
  GapPolicy gap{0.05};
  IntegratorConfig integrator{};
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  NominalSettings nominal;
  RobustifySettings robustify;
  TrackingSettings tracking;
  SweepSettings sweep;
  /// Effective document (after command-line overrides); hashed for provenance.
  json document;
};

/// Reads and validates a config file. Throws ConfigError naming the path.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Validates `doc` against the experiment schema and converts it; relative
/// control_file entries resolve against `base_dir`.
ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir);

json control_to_json(const BangBangControl& control);
/// Throws ConfigError on a malformed or inadmissible control.
BangBangControl control_from_json(const json& doc);

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 hex digits of the FNV-1a hash of the compact dump of `doc`.
std::string config_hash(const json& doc);

const json& experiment_schema();
const json& result_schema();

/// Minimal JSON-schema check (type, enum, required, properties,
/// additionalProperties, items, min/maxItems, minimum, maximum,
/// exclusiveMinimum, local $ref). Returns one message per violation.
std::vector<std::string> schema_errors(const json& doc, const json& schema);

}  // namespace bangbang::cli
