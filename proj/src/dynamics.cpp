#include "bangbang/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bangbang {

Matrix RigidBodyParams::torque_matrix() const {
  Matrix b(3, static_cast<Eigen::Index>(torques.size()));
  for (std::size_t k = 0; k < torques.size(); ++k) {
    for (int i = 0; i < 3; ++i) b(i, static_cast<Eigen::Index>(k)) = torques[k][static_cast<std::size_t>(i)];
  }
  return b;
}

RigidBodyParams reference_rigid_body() {
  RigidBodyParams p;
  p.alpha = {1.0, -1.0, 1.0};
  p.torques = {{2.0, 1.0, 0.3}, {-2.0, -1.0, -0.3}, {0.0, 0.0, 1.0}, {0.0, 0.0, -1.0}};
  return p;
}

ChannelBounds on_off_bounds(std::size_t channels) {
  return ChannelBounds{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

void PerturbationSpec::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("perturbation epsilon must be >= 0");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(std::abs(amplitudes[i]) <= 1.0)) {
      throw std::invalid_argument("perturbation profile must satisfy |h_i| <= 1");
    }
    if (!(periods[i] > 0.0)) throw std::invalid_argument("perturbation period must be positive");
  }
}

std::array<double, 3> PerturbationSpec::profile(double t) const {
  std::array<double, 3> h{};
  for (std::size_t i = 0; i < 3; ++i) {
    h[i] = amplitudes[i] * std::sin(2.0 * std::numbers::pi * t / periods[i] + phases[i]);
  }
  return h;
}

namespace {

void check_dims(const RigidBodyParams& params, const Vector& x, const Vector& u) {
  if (x.size() != 3 || u.size() != static_cast<Eigen::Index>(params.channels())) {
    throw std::invalid_argument("rigid body: state must be 3-dimensional and u must match the torque count");
  }
}

Vector euler_drift(const std::array<double, 3>& a, const Vector& x) {
  Vector dx(3);
  dx << a[0] * x[1] * x[2], a[1] * x[0] * x[2], a[2] * x[0] * x[1];
  return dx;
}

Matrix euler_jacobian(const std::array<double, 3>& a, const Vector& x) {
  Matrix j(3, 3);
  j << 0.0, a[0] * x[2], a[0] * x[1],
       a[1] * x[2], 0.0, a[1] * x[0],
       a[2] * x[1], a[2] * x[0], 0.0;
  return j;
}

}  // namespace

Vector rigid_body_rhs(const RigidBodyParams& params, const Vector& x, const Vector& u) {
  check_dims(params, x, u);
  Vector dx = euler_drift(params.alpha, x);
  for (std::size_t k = 0; k < params.torques.size(); ++k) {
    const double uk = u[static_cast<Eigen::Index>(k)];
    for (int i = 0; i < 3; ++i) dx[i] += params.torques[k][static_cast<std::size_t>(i)] * uk;
  }
  return dx;
}

Matrix rigid_body_jacobian(const RigidBodyParams& params, const Vector& x, const Vector& u) {
  check_dims(params, x, u);
  return euler_jacobian(params.alpha, x);
}

Vector perturbed_rhs(const RigidBodyParams& params, const PerturbationSpec& spec, double t,
                     const Vector& x, const Vector& u) {
  RigidBodyParams shifted = params;
  const auto h = spec.profile(t);
  for (std::size_t i = 0; i < 3; ++i) shifted.alpha[i] += spec.epsilon * h[i];
  return rigid_body_rhs(shifted, x, u);
}

RigidBodyModel::RigidBodyModel(RigidBodyParams params)
    : params_(std::move(params)), torque_matrix_(params_.torque_matrix()) {
  if (params_.torques.empty()) throw std::invalid_argument("rigid body needs at least one torque");
}

Vector RigidBodyModel::rhs(double, const Vector& x, const Vector& u) const {
  return euler_drift(params_.alpha, x) + torque_matrix_ * u;
}

Matrix RigidBodyModel::jacobian_x(double, const Vector& x, const Vector&) const {
  return euler_jacobian(params_.alpha, x);
}

Vector RigidBodyModel::switch_jump(double, const Vector&, const Vector& u_before,
                                   const Vector& u_after) const {
  // Control-affine: only the switching channel's input field contributes.
  return torque_matrix_ * (u_before - u_after);
}

PerturbedRigidBodyModel::PerturbedRigidBodyModel(RigidBodyParams params, PerturbationSpec spec)
    : RigidBodyModel(std::move(params)), spec_(spec) {
  spec_.validate();
}

RigidBodyParams PerturbedRigidBodyModel::at_time(double t) const {
  RigidBodyParams p = params_;
  const auto h = spec_.profile(t);
  for (std::size_t i = 0; i < 3; ++i) p.alpha[i] += spec_.epsilon * h[i];
  return p;
}

Vector PerturbedRigidBodyModel::rhs(double t, const Vector& x, const Vector& u) const {
  return euler_drift(at_time(t).alpha, x) + torque_matrix_ * u;
}

Matrix PerturbedRigidBodyModel::jacobian_x(double t, const Vector& x, const Vector&) const {
  return euler_jacobian(at_time(t).alpha, x);
}

}  // namespace bangbang
