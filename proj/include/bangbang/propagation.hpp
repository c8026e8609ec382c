#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "bangbang/control.hpp"
#include "bangbang/dynamics.hpp"

namespace bangbang {

/// Fixed-step RK4; every segment between breakpoints is split into
/// ceil(length / base_step) equal steps.
struct IntegratorConfig {
  double base_step = 1e-3;

  void validate() const;
};

/// Sampled solution. Breakpoints (switching times, span ends) are exact nodes.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;

  std::size_t size() const noexcept { return times.size(); }
  const Vector& final_state() const { return states.back(); }
};

/// Solves x' = f(t, x, u(t)) on [t_a, t_b], restarting the stepper at every
/// switching time inside the span.
Trajectory propagate(const DynamicsModel& model, const Vector& x0, const BangBangControl& control,
                     double t_a, double t_b, const IntegratorConfig& config = {});

/// Solves the reversed system y'(s) = -f(t_f - s, y, u(t_f - s)), y(0) = x_end,
/// on s in [0, horizon]. Returned times are in the reversed clock s.
Trajectory propagate_backward(const DynamicsModel& model, const Vector& x_end,
                              const BangBangControl& control, double horizon,
                              const IntegratorConfig& config = {});

/// Final states of propagate / propagate_backward without storing samples.
Vector propagate_final_state(const DynamicsModel& model, const Vector& x0,
                             const BangBangControl& control, double t_a, double t_b,
                             const IntegratorConfig& config = {});
Vector propagate_backward_final_state(const DynamicsModel& model, const Vector& x_end,
                                      const BangBangControl& control, double horizon,
                                      const IntegratorConfig& config = {});

/// CSV with header t,x_1,...,x_n.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

namespace detail {

/// Breakpoints from `from` to `to` (either direction) in travel order: both
/// ends, every switching time strictly between, and every extra time
/// strictly between. Exact duplicates are merged.
std::vector<double> breakpoints(const BangBangControl& control, double from, double to,
                                std::span<const double> extra = {});

std::size_t step_count(double length, double base_step);

/// One classical RK4 step of x' = f(t, x, u) with signed step h.
Vector rk4_step(const DynamicsModel& model, double t, double h, const Vector& x, const Vector& u);

}  // namespace detail

}  // namespace bangbang
