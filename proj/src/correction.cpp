#include "bangbang/correction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "bangbang/errors.hpp"

namespace bangbang {

namespace {

struct Decomposition {
  Eigen::JacobiSVD<Matrix> svd;
  double cutoff = 0.0;
};

Decomposition decompose(const Matrix& m, double rank_tolerance) {
  if (!m.allFinite()) throw std::invalid_argument("SVD input must be finite");
  Decomposition d{Eigen::JacobiSVD<Matrix>(m, Eigen::ComputeThinU | Eigen::ComputeThinV)};
  const auto& sv = d.svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  d.cutoff = rank_tolerance * smax;
  return d;
}

}  // namespace

Vector SvdSolver::min_norm_solve(const Matrix& m, const Vector& rhs) const {
  if (rhs.size() != m.rows()) throw std::invalid_argument("min_norm_solve: dimension mismatch");
  if (!(rank_tolerance > 0.0)) throw std::invalid_argument("rank tolerance must be positive");
  const auto d = decompose(m, rank_tolerance);
  const auto& sv = d.svd.singularValues();
  const Vector projected = d.svd.matrixU().transpose() * rhs;
  Vector scaled = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > d.cutoff && sv[i] > 0.0) scaled[i] = projected[i] / sv[i];
  }
  return d.svd.matrixV() * scaled;
}

double SvdSolver::sigma_min(const Matrix& m) const {
  if (!(rank_tolerance > 0.0)) throw std::invalid_argument("rank tolerance must be positive");
  const auto d = decompose(m, rank_tolerance);
  const auto& sv = d.svd.singularValues();
  double smallest = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > d.cutoff && sv[i] > 0.0) smallest = sv[i];
  }
  if (smallest == 0.0) throw AllSingularValuesZero("sigma_min: matrix is numerically zero");
  return smallest;
}

Vector min_norm_solve(const Matrix& m, const Vector& rhs, const SvdSolver& solver) {
  return solver.min_norm_solve(m, rhs);
}

double sigma_min(const Matrix& m, const SvdSolver& solver) { return solver.sigma_min(m); }

const char* to_string(CorrectionStatus status) {
  switch (status) {
    case CorrectionStatus::applied: return "applied";
    case CorrectionStatus::rejected: return "rejected";
    case CorrectionStatus::below_threshold: return "below_threshold";
    case CorrectionStatus::no_freedom: return "no_freedom";
  }
  return "unknown";
}

Correction compute_correction(const DynamicsModel& model, double t, const BangBangControl& control,
                              const Vector& observed_state, const Vector& target,
                              const SvdSolver& solver, const IntegratorConfig& config,
                              double drift_threshold, double damping) {
  if (control.events_after(t) == 0) throw NoFreedomLeft("compute_correction: no switching left after t");
  const double times[] = {t};
  auto reference = backward_sensitivity_profile(model, control, target, times, config).front();
  const Matrix& jac = reference.differential.matrix;

  Correction out;
  auto& r = out.report;
  r.time = t;
  r.drift = observed_state - reference.state;
  r.sigma_min = solver.sigma_min(jac);
  const double drift_norm = r.drift.norm();
  if (drift_norm <= drift_threshold) {
    r.shift = Vector::Zero(jac.cols());
    r.residual = drift_norm;
    r.bound_ok = true;
    r.accepted = true;
    r.status = CorrectionStatus::below_threshold;
    out.control = control;
    return out;
  }

  r.shift = solver.min_norm_solve(jac, r.drift);
  r.residual = (jac * r.shift - r.drift).norm();
  // ||M^+|| = 1 / sigma_min; the slack only absorbs rounding in the two norms.
  r.bound_ok = r.shift.norm() <= (drift_norm / r.sigma_min) * (1.0 + 1e-12);
  const Vector applied = damping * r.shift;
  try {
    out.control = apply_shift(control, std::span<const double>(applied.data(), static_cast<std::size_t>(applied.size())), t);
    r.accepted = true;
    r.status = CorrectionStatus::applied;
  } catch (const OrderViolation&) {
    r.accepted = false;
    r.status = CorrectionStatus::rejected;
  }
  return out;
}

void TrackingConfig::validate(double final_time) const {
  double previous = 0.0;
  for (double tau : checkpoints) {
    if (!(tau > previous) || !(tau < final_time)) {
      throw std::invalid_argument("tracking checkpoints must be strictly increasing inside (0, t_f)");
    }
    previous = tau;
  }
  if (!(damping > 0.0)) throw std::invalid_argument("tracking damping must be positive");
  if (!(drift_threshold >= 0.0)) throw std::invalid_argument("drift threshold must be >= 0");
  integrator.validate();
}

std::vector<double> default_checkpoints(const BangBangControl& control, std::size_t count) {
  if (control.event_count() == 0 || count == 0) return {};
  const double last = control.events().back().time;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = 0.95 * last * static_cast<double>(i + 1) / static_cast<double>(count);
  }
  return out;
}

bool TrackingResult::any_rejected() const {
  return std::ranges::any_of(reports, [](const CorrectionReport& r) {
    return r.status == CorrectionStatus::rejected;
  });
}

TrackingResult track(const DynamicsModel& model_nominal, const DynamicsModel& model_true,
                     const BangBangControl& control_nominal, const Vector& x0,
                     const Vector& target, const TrackingConfig& config) {
  const double tf = control_nominal.final_time();
  config.validate(tf);
  const double target_norm = target.norm();
  const double scale = target_norm > 0.0 ? target_norm : 1.0;

  TrackingResult result{Trajectory{{0.0}, {x0}}, {}, control_nominal, {}, 0.0, 0.0};
  BangBangControl working = control_nominal;
  Vector x = x0;
  double t = 0.0;

  auto advance = [&](double until) {
    if (!(until > t)) return;
    const auto seg = propagate(model_true, x, working, t, until, config.integrator);
    result.trajectory.times.insert(result.trajectory.times.end(), seg.times.begin() + 1, seg.times.end());
    result.trajectory.states.insert(result.trajectory.states.end(), seg.states.begin() + 1, seg.states.end());
    x = seg.final_state();
    t = until;
  };

  for (double tau : config.checkpoints) {
    advance(tau);
    if (working.events_after(tau) == 0) {
      CorrectionReport r;
      r.time = tau;
      r.drift = x - backward_endpoint(model_nominal, tau, working, target, config.integrator);
      r.sigma_min = std::numeric_limits<double>::quiet_NaN();
      r.residual = r.drift.norm();
      r.status = CorrectionStatus::no_freedom;
      result.reports.push_back(std::move(r));
      continue;
    }
    auto c = compute_correction(model_nominal, tau, working, x, target, config.solver,
                                config.integrator, config.drift_threshold, config.damping);
    if (c.report.accepted) working = std::move(*c.control);
    result.reports.push_back(std::move(c.report));
  }
  advance(tf);

  result.final_control = working;
  result.corrected_error = (x - target).norm() / scale;
  result.uncorrected_final =
      propagate(model_true, x0, control_nominal, 0.0, tf, config.integrator).final_state();
  result.uncorrected_error = (result.uncorrected_final - target).norm() / scale;
  return result;
}

void write_tracking_log_csv(std::ostream& out, const std::vector<CorrectionReport>& reports) {
  out << "tau,drift_norm,sigma_min,shift_norm,accepted,residual,status\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : reports) {
    out << r.time << ',' << r.drift.norm() << ',' << r.sigma_min << ','
        << (r.shift.size() ? r.shift.norm() : 0.0) << ',' << (r.accepted ? 1 : 0) << ','
        << r.residual << ',' << to_string(r.status) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace bangbang
