#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bangbang/control.hpp"
#include "bangbang/correction.hpp"
#include "bangbang/dynamics.hpp"
#include "bangbang/propagation.hpp"

namespace bangbang {

struct CostWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  void validate() const;
};

/// Midpoint quadrature of 1/sigma_min(t)^2 on [0, upper_limit] with `samples`
/// cells shared out over the segments between switching times; the upper
/// limit defaults to the last switching time.
struct RobustnessGrid {
  std::size_t samples = 200;
  std::optional<double> upper_limit;

  void validate() const;
};

/// Running cost C of a control; the shipped instance is the L1 + time cost.
using ControlCost = std::function<double(const BangBangControl&)>;

/// integral of sum_i |u_i(t)| over [0, t_f], plus t_f.
double l1_time_cost(const BangBangControl& control);

/// C_r = integral over [0, t_N] of 1 / sigma_min(t)^2, sigma_min(t) being the
/// smallest positive singular value of the backward end-point differential.
double robustness_cost(const DynamicsModel& model, const BangBangControl& control,
                       const Vector& target, const RobustnessGrid& grid = {},
                       const SvdSolver& solver = {}, const IntegratorConfig& config = {});

/// sigma_min(t) at the robustness quadrature nodes (diagnostics and tests).
std::vector<double> robustness_profile(const DynamicsModel& model, const BangBangControl& control,
                                       const Vector& target, std::span<const double> times,
                                       const SvdSolver& solver = {},
                                       const IntegratorConfig& config = {});

/// Euclidean projection of ascending times onto
/// { eta <= tau_1, tau_{k+1} - tau_k >= eta, tau_K <= t_f - eta }.
std::vector<double> project_onto_gaps(std::span<const double> times, double final_time, double eta);

/// Equality-constrained switching-time problem: minimize
/// lambda1 C + lambda2 C_r subject to E(T) = target and the gap policy.
struct TimingProblem {
  const DynamicsModel* model = nullptr;
  Vector x0;
  Vector target;
  CostWeights weights{};
  GapPolicy gap{0.05};
  RobustnessGrid grid{};
  SvdSolver solver{};
  IntegratorConfig integrator{};
  ControlCost cost = l1_time_cost;
  bool free_final_time = false;
  /// Upper bound on t_f when it is a decision variable.
  double max_final_time = 10.0;
};

/// Quadratic penalty mu_k ||E - x_f||^2 with mu_k = 10^k, each stage solved
/// by a projected quasi-Newton method in gap coordinates.
struct NlpOptions {
  int first_penalty_exponent = 1;
  int last_penalty_exponent = 6;
  std::size_t max_inner_iterations = 60;
  double fd_step = 1e-6;
  double feasibility_tolerance = 1e-6;
  double step_tolerance = 1e-8;
  /// Minimal-norm Newton polish on E(T) = x_f after the penalty sequence.
  std::size_t polish_iterations = 8;
};

struct RobustifyResult {
  BangBangControl control;
  double cost_c = 0.0;
  double cost_cr = 0.0;
  double objective = 0.0;
  std::vector<std::size_t> channels;  ///< needle channels, 0-based
  double constraint_residual = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Optimizes the switching times of `initial` (structure fixed). The result
/// carries the best feasible iterate, or the last iterate with
/// converged = false.
RobustifyResult solve_timing_nlp(const TimingProblem& problem, const BangBangControl& initial,
                                 const NlpOptions& options = {});

/// Appends one needle per entry of `channels` after max(after_time, t_N):
/// spacing and width 2 eta when they fit before t_f - eta, otherwise the
/// 2l new times are spread uniformly. If even that breaks the gap, the needles
/// are packed eta apart against t_f and all times are projected onto the gap
/// set, which moves the last base switchings earlier.
BangBangControl place_needles(const BangBangControl& base, std::span<const std::size_t> channels,
                              const GapPolicy& gap, double after_time);

enum class SearchMode { exhaustive, greedy };

struct TupleOutcome {
  std::vector<std::size_t> channels;
  std::optional<RobustifyResult> result;  ///< empty if the tuple could not be set up
};

struct ChannelSearch {
  std::vector<TupleOutcome> table;  ///< ordered lexicographically by tuple
  std::optional<std::size_t> best;  ///< index into table (converged entries only)
};

/// Exhaustive mode solves every tuple in {channels}^l; greedy mode fixes the
/// first l-1 entries to `greedy_prefix` and tries the m possible last channels.
ChannelSearch enumerate_needle_channels(const TimingProblem& problem,
                                        const BangBangControl& base_control, std::size_t needles,
                                        SearchMode mode = SearchMode::exhaustive,
                                        std::span<const std::size_t> greedy_prefix = {},
                                        const NlpOptions& options = {}, std::size_t jobs = 1);

/// Initial channel values and switching channel sequence of a candidate nominal.
struct SwitchingStructure {
  std::vector<double> initial_values;
  std::vector<std::size_t> channels;
};

/// All structures with the given number of switchings over on/off channels
/// (m^N sequences times 2^m initial values).
std::vector<SwitchingStructure> all_structures(std::size_t channels, std::size_t switchings);

struct NominalSearch {
  std::vector<SwitchingStructure> structures;
  double min_final_time = 0.2;
  double max_final_time = 3.0;
  std::size_t starts = 50;
  std::uint64_t seed = 1;
};

/// Multi-start minimization of C over (t_1..t_N, t_f) subject to E = target for
/// every candidate structure; returns the cheapest feasible control. Throws
/// NoFeasibleNominal if no start converges.
RobustifyResult derive_nominal(const TimingProblem& problem, const NominalSearch& search,
                               const NlpOptions& options = {}, std::size_t jobs = 1);

using ModelFactory = std::function<std::unique_ptr<DynamicsModel>(double epsilon)>;

struct EpsilonSweep {
  double epsilon_max = 0.0;
  /// Per grid point (up to the first failure when run sequentially): true if
  /// some correction was rejected.
  std::vector<bool> failed;
};

/// Largest grid epsilon before the first tracking run that rejects a
/// correction for interchanged switching times. Returns grid.front() - 1 if
/// the first grid value already fails and grid.back() if none does.
EpsilonSweep epsilon_max(const DynamicsModel& model_nominal, const ModelFactory& perturbed,
                         const BangBangControl& control, const Vector& x0, const Vector& target,
                         std::span<const double> eps_grid, const TrackingConfig& config,
                         std::size_t jobs = 1);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Columns: tuple, converged, C, C_r, residual (tuple 1-based, '-'-joined).
void write_cost_table_csv(std::ostream& out, const ChannelSearch& search);

}  // namespace bangbang
