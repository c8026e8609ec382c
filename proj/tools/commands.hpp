#pragma once

#include <filesystem>
#include <ostream>

#include "config.hpp"

namespace bangbang::cli {

struct RunContext {
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  std::ostream* log = nullptr;  ///< progress messages, may be null
};

/// Each command writes its files into ctx.out_dir and returns the result
/// document. Numerical failures surface as NoFeasibleNominal / NotConverged.
json cmd_nominal(const ExperimentConfig& config, const RunContext& ctx);
json cmd_robustify(const ExperimentConfig& config, const RunContext& ctx);
json cmd_track(const ExperimentConfig& config, const RunContext& ctx);
json cmd_sweep(const ExperimentConfig& config, const RunContext& ctx);

/// Channel search of the robustify section with `needles` needle pairs; greedy
/// mode without an explicit prefix chains the best tuples from one needle up.
ChannelSearch robustify_search(const ExperimentConfig& config, const DynamicsModel& model,
                               const BangBangControl& base, std::size_t needles, std::size_t jobs);

TimingProblem timing_problem(const ExperimentConfig& config, const DynamicsModel& model);

/// "# config_hash=... command=... seed=..."
std::string provenance_line(const ExperimentConfig& config, const char* command);

}  // namespace bangbang::cli
