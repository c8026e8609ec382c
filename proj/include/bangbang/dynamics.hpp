#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "bangbang/control.hpp"

namespace bangbang {

/// Controlled vector field x' = f(t, x, u) together with its state Jacobian.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;
  virtual Vector rhs(double t, const Vector& x, const Vector& u) const = 0;
  virtual Matrix jacobian_x(double t, const Vector& x, const Vector& u) const = 0;

  /// f(t, x, u_before) - f(t, x, u_after), the jump of the vector field across
  /// a switching. Control-affine models override this with the direct
  /// (u_before - u_after) * f_i(x) form.
  virtual Vector switch_jump(double t, const Vector& x, const Vector& u_before,
                             const Vector& u_after) const {
    return rhs(t, x, u_before) - rhs(t, x, u_after);
  }
};

/// Normalized Euler equations of a rigid body in its principal axes.
struct RigidBodyParams {
  std::array<double, 3> alpha{1.0, -1.0, 1.0};
  /// One normalized torque direction b^k per control channel.
  std::vector<std::array<double, 3>> torques;

  std::size_t channels() const noexcept { return torques.size(); }
  /// 3 x m matrix with columns b^k.
  Matrix torque_matrix() const;
};

/// alpha = (1, -1, 1) and the four opposed thrusters
/// b^1 = [2, 1, 0.3], b^2 = -b^1, b^3 = [0, 0, 1], b^4 = -b^3.
RigidBodyParams reference_rigid_body();

/// Bounds [0, 1] on each of the given number of channels.
ChannelBounds on_off_bounds(std::size_t channels);

/// alpha_i(t) = alpha_i + epsilon * h_i(t), h_i(t) = amplitude_i sin(2 pi t / period_i + phase_i).
struct PerturbationSpec {
  double epsilon = 0.0;
  std::array<double, 3> amplitudes{1.0, 1.0, 1.0};
  std::array<double, 3> periods{0.7, 1.1, 1.3};
  std::array<double, 3> phases{0.0, 1.0471975511965976, 2.0943951023931957};

  /// Throws std::invalid_argument if epsilon < 0, |amplitude| > 1 or period <= 0.
  void validate() const;
  std::array<double, 3> profile(double t) const;
};

Vector rigid_body_rhs(const RigidBodyParams& params, const Vector& x, const Vector& u);
Matrix rigid_body_jacobian(const RigidBodyParams& params, const Vector& x, const Vector& u);
Vector perturbed_rhs(const RigidBodyParams& params, const PerturbationSpec& spec, double t,
                     const Vector& x, const Vector& u);

class RigidBodyModel : public DynamicsModel {
 public:
  explicit RigidBodyModel(RigidBodyParams params);

  std::size_t state_dim() const override { return 3; }
  std::size_t control_dim() const override { return params_.channels(); }
  Vector rhs(double t, const Vector& x, const Vector& u) const override;
  Matrix jacobian_x(double t, const Vector& x, const Vector& u) const override;
  Vector switch_jump(double t, const Vector& x, const Vector& u_before,
                     const Vector& u_after) const override;

  const RigidBodyParams& params() const noexcept { return params_; }

 protected:
  RigidBodyParams params_;
  Matrix torque_matrix_;
};

/// Rigid body whose inertia ratios oscillate in time.
class PerturbedRigidBodyModel : public RigidBodyModel {
 public:
  PerturbedRigidBodyModel(RigidBodyParams params, PerturbationSpec spec);

  Vector rhs(double t, const Vector& x, const Vector& u) const override;
  Matrix jacobian_x(double t, const Vector& x, const Vector& u) const override;

  const PerturbationSpec& perturbation() const noexcept { return spec_; }

 private:
  RigidBodyParams at_time(double t) const;

  PerturbationSpec spec_;
};

}  // namespace bangbang
