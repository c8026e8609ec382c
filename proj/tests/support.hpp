#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "bangbang/control.hpp"
#include "bangbang/dynamics.hpp"

namespace bangbang::testing {

/// x' = u with one state per channel.
class Integrator : public DynamicsModel {
 public:
  explicit Integrator(std::size_t channels = 1) : m_(channels) {}
  std::size_t state_dim() const override { return m_; }
  std::size_t control_dim() const override { return m_; }
  Vector rhs(double, const Vector&, const Vector& u) const override { return u; }
  Matrix jacobian_x(double, const Vector&, const Vector&) const override {
    return Matrix::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
  }

 private:
  std::size_t m_;
};

/// x' = a x + u (scalar).
class Linear : public DynamicsModel {
 public:
  explicit Linear(double a) : a_(a) {}
  std::size_t state_dim() const override { return 1; }
  std::size_t control_dim() const override { return 1; }
  Vector rhs(double, const Vector& x, const Vector& u) const override { return a_ * x + u; }
  Matrix jacobian_x(double, const Vector&, const Vector&) const override {
    return Matrix::Constant(1, 1, a_);
  }

 private:
  double a_;
};

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline Vector rigid_target() { return vec({0.4, -0.3, 0.4}); }

/// Cheapest structure found by the multi-start nominal search (see
/// configs/rigid_body.json): channels 1 and 3 active early, then coasting.
BangBangControl rigid_nominal();

/// Random admissible control on the reference channels with `events` switchings
/// spread over [0, t_f], gaps of at least `eta`.
inline BangBangControl random_control(std::mt19937_64& rng, std::size_t channels,
                                      std::size_t events, double tf, double eta) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, channels - 1);
  std::vector<double> init(channels);
  for (double& v : init) v = unit(rng) < 0.5 ? 0.0 : 1.0;
  const double free = tf - static_cast<double>(events + 1) * eta;
  std::vector<double> cuts(events);
  for (double& c : cuts) c = unit(rng) * free;
  std::sort(cuts.begin(), cuts.end());
  std::vector<SwitchingEvent> ev;
  for (std::size_t k = 0; k < events; ++k) {
    ev.push_back({cuts[k] + static_cast<double>(k + 1) * eta, pick(rng)});
  }
  return BangBangControl(on_off_bounds(channels), init, ev, tf);
}

}  // namespace bangbang::testing
