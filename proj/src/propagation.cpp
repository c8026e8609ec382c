#include "bangbang/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bangbang/errors.hpp"

namespace bangbang {

void IntegratorConfig::validate() const {
  if (!(base_step > 0.0) || !std::isfinite(base_step)) {
    throw std::invalid_argument("integrator base step must be positive");
  }
}

namespace detail {

std::vector<double> breakpoints(const BangBangControl& control, double from, double to,
                                std::span<const double> extra) {
  const double lo = std::min(from, to);
  const double hi = std::max(from, to);
  std::vector<double> pts{from, to};
  for (const auto& e : control.events()) {
    if (e.time > lo && e.time < hi) pts.push_back(e.time);
  }
  for (double t : extra) {
    if (t > lo && t < hi) pts.push_back(t);
  }
  if (from <= to) {
    std::ranges::sort(pts);
  } else {
    std::ranges::sort(pts, std::greater<>{});
  }
  const auto dup = std::ranges::unique(pts);
  pts.erase(dup.begin(), dup.end());
  return pts;
}

std::size_t step_count(double length, double base_step) {
  const double n = std::ceil(std::abs(length) / base_step);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

Vector rk4_step(const DynamicsModel& model, double t, double h, const Vector& x, const Vector& u) {
  const Vector k1 = model.rhs(t, x, u);
  const Vector k2 = model.rhs(t + 0.5 * h, x + 0.5 * h * k1, u);
  const Vector k3 = model.rhs(t + 0.5 * h, x + 0.5 * h * k2, u);
  const Vector k4 = model.rhs(t + h, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

namespace {

/// Integrates in physical time from `from` to `to`; `clock` maps physical
/// time to the recorded time stamp.
template <class Clock>
Trajectory integrate(const DynamicsModel& model, const Vector& x_start,
                     const BangBangControl& control, double from, double to,
                     const IntegratorConfig& config, Clock clock, bool record = true) {
  config.validate();
  if (x_start.size() != static_cast<Eigen::Index>(model.state_dim()) || !x_start.allFinite()) {
    throw std::invalid_argument("initial state must be finite and match the model dimension");
  }
  Trajectory traj;
  traj.times.push_back(clock(from));
  traj.states.push_back(x_start);
  if (from == to) return traj;

  const auto pts = detail::breakpoints(control, from, to);
  Vector x = x_start;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const double a = pts[s];
    const double b = pts[s + 1];
    const Vector u = control.value_at(0.5 * (a + b));
    const std::size_t n = detail::step_count(b - a, config.base_step);
    const double h = (b - a) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = a + static_cast<double>(i) * h;
      x = detail::rk4_step(model, t, h, x, u);
      if (!x.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite state near t=" << t + h;
        throw IntegrationBlowup(msg.str());
      }
      if (!record) continue;
      const double t_next = (i + 1 == n) ? b : a + static_cast<double>(i + 1) * h;
      traj.times.push_back(clock(t_next));
      traj.states.push_back(x);
    }
  }
  if (!record) {
    traj.times.push_back(clock(to));
    traj.states.push_back(x);
  }
  return traj;
}

}  // namespace

Trajectory propagate(const DynamicsModel& model, const Vector& x0, const BangBangControl& control,
                     double t_a, double t_b, const IntegratorConfig& config) {
  if (!(t_a < t_b) || t_a < 0.0 || t_b > control.final_time()) {
    throw DomainError("propagate: need 0 <= t_a < t_b <= t_f");
  }
  return integrate(model, x0, control, t_a, t_b, config, [](double t) { return t; });
}

Trajectory propagate_backward(const DynamicsModel& model, const Vector& x_end,
                              const BangBangControl& control, double horizon,
                              const IntegratorConfig& config) {
  const double tf = control.final_time();
  if (!(horizon >= 0.0) || horizon > tf) throw DomainError("propagate_backward: need 0 <= horizon <= t_f");
  return integrate(model, x_end, control, tf, tf - horizon, config,
                   [tf](double t) { return tf - t; });
}

Vector propagate_final_state(const DynamicsModel& model, const Vector& x0,
                             const BangBangControl& control, double t_a, double t_b,
                             const IntegratorConfig& config) {
  if (!(t_a < t_b) || t_a < 0.0 || t_b > control.final_time()) {
    throw DomainError("propagate: need 0 <= t_a < t_b <= t_f");
  }
  return integrate(model, x0, control, t_a, t_b, config, [](double t) { return t; }, false)
      .final_state();
}

Vector propagate_backward_final_state(const DynamicsModel& model, const Vector& x_end,
                                      const BangBangControl& control, double horizon,
                                      const IntegratorConfig& config) {
  const double tf = control.final_time();
  if (!(horizon >= 0.0) || horizon > tf) throw DomainError("propagate_backward: need 0 <= horizon <= t_f");
  return integrate(model, x_end, control, tf, tf - horizon, config, [tf](double t) { return tf - t; },
                   false)
      .final_state();
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "t";
  const auto n = trajectory.states.empty() ? 0 : trajectory.states.front().size();
  for (Eigen::Index i = 0; i < n; ++i) out << ",x_" << (i + 1);
  out << '\n';
  const auto old_precision = out.precision(17);
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    out << trajectory.times[k];
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << trajectory.states[k][i];
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace bangbang
