#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "bangbang/control.hpp"
#include "bangbang/dynamics.hpp"
#include "bangbang/propagation.hpp"

namespace bangbang {

/// Differential of an end-point map with respect to switching times.
/// Column k is the variation vector of event column_index[k].
struct EndpointDifferential {
  Matrix matrix;
  std::vector<std::size_t> column_index;

  std::size_t columns() const noexcept { return column_index.size(); }
};

struct EndpointSensitivity {
  Vector state;
  EndpointDifferential differential;
};

/// E(T): state at t_f reached from x0.
Vector endpoint(const DynamicsModel& model, const Vector& x0, const BangBangControl& control,
                const IntegratorConfig& config = {});

/// v_j at the end of `trajectory`, started at t_j from the jump of the vector
/// field across event j. `trajectory` must be a forward solution that has
/// t_j as a node.
Vector variation_vector(const DynamicsModel& model, const Trajectory& trajectory,
                        const BangBangControl& control, std::size_t event_index,
                        const IntegratorConfig& config = {});

/// E(T) together with dE(T) = (v_1(t_f) ... v_N(t_f)), from one augmented solve.
EndpointSensitivity endpoint_sensitivity(const DynamicsModel& model, const Vector& x0,
                                         const BangBangControl& control,
                                         const IntegratorConfig& config = {});

EndpointDifferential d_endpoint(const DynamicsModel& model, const Vector& x0,
                                const BangBangControl& control,
                                const IntegratorConfig& config = {});

/// Backward end-point map: the state at time t from which `control` steers
/// the system exactly to `target` at t_f.
Vector backward_endpoint(const DynamicsModel& model, double t, const BangBangControl& control,
                         const Vector& target, const IntegratorConfig& config = {});

/// d(backward_endpoint)/d(t_k) for every event with t_k > t. Throws
/// NoFreedomLeft when no such event exists.
EndpointDifferential d_backward_endpoint(const DynamicsModel& model, double t,
                                         const BangBangControl& control, const Vector& target,
                                         const IntegratorConfig& config = {});

/// Backward state and differential at each of `times` (ascending, inside
/// [0, t_f]) from a single reversed sweep. Entries at times with no event
/// after them have zero columns.
std::vector<EndpointSensitivity> backward_sensitivity_profile(
    const DynamicsModel& model, const BangBangControl& control, const Vector& target,
    std::span<const double> times, const IntegratorConfig& config = {});

/// CSV with n rows and one column per movable event (header: 1-based event indices).
void write_differential_csv(std::ostream& out, const EndpointDifferential& differential);

}  // namespace bangbang
