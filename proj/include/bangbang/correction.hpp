#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "bangbang/control.hpp"
#include "bangbang/dynamics.hpp"
#include "bangbang/endpoint.hpp"
#include "bangbang/propagation.hpp"

namespace bangbang {

/// SVD-based pseudo-inverse. Singular values at or below
/// rank_tolerance * sigma_max count as zero.
struct SvdSolver {
  double rank_tolerance = 1e-10;

  /// M^+ rhs: least-squares minimizer of ||M z - rhs|| with minimal ||z||.
  Vector min_norm_solve(const Matrix& m, const Vector& rhs) const;
  /// Smallest positive singular value. Throws AllSingularValuesZero if M ~ 0.
  double sigma_min(const Matrix& m) const;
};

Vector min_norm_solve(const Matrix& m, const Vector& rhs, const SvdSolver& solver = {});
double sigma_min(const Matrix& m, const SvdSolver& solver = {});

enum class CorrectionStatus {
  applied,          ///< shift computed and admissible
  rejected,         ///< shift would interchange switching times
  below_threshold,  ///< drift too small to act on
  no_freedom,       ///< no switching time left after the checkpoint
};

const char* to_string(CorrectionStatus status);

struct CorrectionReport {
  double time = 0.0;
  Vector drift;
  Vector shift;  ///< one entry per movable event (events after `time`)
  double sigma_min = 0.0;
  double residual = 0.0;
  bool accepted = false;
  bool bound_ok = false;
  CorrectionStatus status = CorrectionStatus::no_freedom;
};

struct Correction {
  CorrectionReport report;
  /// Shifted control when the report is accepted.
  std::optional<BangBangControl> control;
};

/// Drift of `observed_state` from the backward end-point map at t, and the
/// minimal-norm switching-time shift that absorbs it at first order. Throws
/// NoFreedomLeft if no event lies after t.
Correction compute_correction(const DynamicsModel& model, double t, const BangBangControl& control,
                              const Vector& observed_state, const Vector& target,
                              const SvdSolver& solver = {}, const IntegratorConfig& config = {},
                              double drift_threshold = 0.0, double damping = 1.0);

struct TrackingConfig {
  std::vector<double> checkpoints;
  GapPolicy gap{0.05};
  double drift_threshold = 1e-12;
  /// Fraction of the minimal-norm shift actually applied.
  double damping = 1.0;
  SvdSolver solver{};
  IntegratorConfig integrator{};

  void validate(double final_time) const;
};

/// `count` uniform checkpoints 0.95 t_N * i / count, i = 1..count.
std::vector<double> default_checkpoints(const BangBangControl& control, std::size_t count = 20);

struct TrackingResult {
  Trajectory trajectory;
  std::vector<CorrectionReport> reports;
  BangBangControl final_control;
  Vector uncorrected_final;
  double corrected_error = 0.0;    ///< ||x_cor(t_f) - x_f|| / ||x_f||
  double uncorrected_error = 0.0;  ///< ||x_per(t_f) - x_f|| / ||x_f||

  bool any_rejected() const;
};

/// Simulates `model_true` under the working control and corrects the switching
/// times at every checkpoint against `model_nominal`. Rejected corrections
/// leave the last admissible control in place.
TrackingResult track(const DynamicsModel& model_nominal, const DynamicsModel& model_true,
                     const BangBangControl& control_nominal, const Vector& x0,
                     const Vector& target, const TrackingConfig& config);

/// Columns: tau, drift_norm, sigma_min, shift_norm, accepted, residual, status.
void write_tracking_log_csv(std::ostream& out, const std::vector<CorrectionReport>& reports);

}  // namespace bangbang
