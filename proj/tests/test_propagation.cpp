#include <cmath>
#include <random>
#include <sstream>

#include "bangbang/errors.hpp"
#include "bangbang/propagation.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bangbang;
using bangbang::testing::vec;

TEST_CASE("equilibrium stays put") {
  const RigidBodyModel model(reference_rigid_body());
  const BangBangControl c(on_off_bounds(4), {0, 0, 0, 0}, {}, 1.0);
  const auto traj = propagate(model, Vector::Zero(3), c, 0.0, 1.0);
  for (const auto& x : traj.states) CHECK(x.isZero());
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == 1.0);
}

TEST_CASE("x' = u is integrated exactly") {
  const bangbang::testing::Integrator model;
  const BangBangControl c(on_off_bounds(1), {1}, {}, 1.0);
  const auto traj = propagate(model, vec({0.25}), c, 0.0, 1.0);
  CHECK(std::abs(traj.final_state()[0] - 1.25) <= 1e-12);
}

TEST_CASE("switching times are trajectory nodes") {
  const bangbang::testing::Integrator model;
  const BangBangControl c(on_off_bounds(1), {0}, {{0.12345, 0}, {0.6789, 0}}, 1.0);
  const auto traj = propagate(model, vec({0.0}), c, 0.0, 1.0);
  for (double t : c.times()) CHECK(std::ranges::find(traj.times, t) != traj.times.end());
  CHECK(std::ranges::is_sorted(traj.times));
  CHECK(traj.final_state()[0] == doctest::Approx(0.6789 - 0.12345).epsilon(1e-14));
}

TEST_CASE("partial span and domain errors") {
  const bangbang::testing::Integrator model;
  const BangBangControl c(on_off_bounds(1), {1}, {{0.5, 0}}, 1.0);
  const auto traj = propagate(model, vec({0.0}), c, 0.25, 0.75);
  CHECK(traj.final_state()[0] == doctest::Approx(0.25));
  CHECK_THROWS_AS(propagate(model, vec({0.0}), c, 0.5, 0.5), DomainError);
  CHECK_THROWS_AS(propagate(model, vec({0.0}), c, 0.0, 1.5), DomainError);
  CHECK_THROWS_AS(propagate(model, vec({0.0}), c, -0.1, 0.5), DomainError);
  CHECK_THROWS_AS(propagate_backward(model, vec({0.0}), c, 1.5), DomainError);
}

TEST_CASE("RK4 global error is fourth order") {
  // x' = a x + u with u = 0: x(t) = x0 exp(a t).
  const bangbang::testing::Linear model(1.3);
  const BangBangControl c(on_off_bounds(1), {0}, {}, 2.0);
  const double exact = std::exp(1.3 * 2.0);
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) {
    const auto traj = propagate(model, vec({1.0}), c, 0.0, 2.0, {h});
    err.push_back(std::abs(traj.final_state()[0] - exact));
  }
  CHECK(err[0] / err[1] == doctest::Approx(16.0).epsilon(0.1));
  CHECK(err[1] / err[2] == doctest::Approx(16.0).epsilon(0.1));
}

TEST_CASE("piecewise forcing matches the closed form") {
  // x' = a x + u, u = 1 on [0.3, 0.8), x(0) = 0.
  const double a = -0.7;
  const bangbang::testing::Linear model(a);
  const BangBangControl c(on_off_bounds(1), {0}, {{0.3, 0}, {0.8, 0}}, 1.5);
  const double x08 = (std::exp(a * 0.5) - 1.0) / a;
  const double exact = x08 * std::exp(a * 0.7);
  CHECK(propagate(model, vec({0.0}), c, 0.0, 1.5).final_state()[0] == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("backward propagation") {
  const bangbang::testing::Integrator model;
  const BangBangControl c(on_off_bounds(1), {0}, {{0.25, 0}, {0.75, 0}}, 1.0);
  const auto zero = propagate_backward(model, vec({0.5}), c, 0.0);
  CHECK(zero.size() == 1);
  CHECK(zero.final_state()[0] == 0.5);
  const auto traj = propagate_backward(model, vec({0.5}), c, 1.0);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == 1.0);
  CHECK(std::ranges::is_sorted(traj.times));
  CHECK(traj.final_state()[0] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("property: backward inverts forward on random rigid-body controls") {
  const RigidBodyModel model(reference_rigid_body());
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = bangbang::testing::random_control(rng, 4, 6, 1.5, 0.05);
    const Vector x0 = vec({unit(rng), unit(rng), unit(rng)});
    const Vector xf = propagate(model, x0, c, 0.0, 1.5).final_state();
    const Vector back = propagate_backward(model, xf, c, 1.5).final_state();
    CHECK((back - x0).norm() <= 1e-8);
  }
}

TEST_CASE("property: step refinement converges at fourth order") {
  const RigidBodyModel model(reference_rigid_body());
  std::mt19937_64 rng(32);
  const auto c = bangbang::testing::random_control(rng, 4, 5, 2.0, 0.05);
  const Vector x0 = vec({0.2, -0.1, 0.3});
  const Vector coarse = propagate(model, x0, c, 0.0, 2.0, {0.02}).final_state();
  const Vector mid = propagate(model, x0, c, 0.0, 2.0, {0.01}).final_state();
  const Vector fine = propagate(model, x0, c, 0.0, 2.0, {0.005}).final_state();
  const double ratio = (coarse - mid).norm() / (mid - fine).norm();
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("property: splitting at a non-switching instant changes nothing") {
  const RigidBodyModel model(reference_rigid_body());
  const BangBangControl c(on_off_bounds(4), {1, 0, 1, 0}, {{0.4, 0}, {0.9, 2}}, 1.6);
  const Vector x0 = vec({0.1, 0.2, -0.1});
  const IntegratorConfig cfg{0.01};
  const Vector direct = propagate(model, x0, c, 0.0, 1.6, cfg).final_state();
  const Vector first = propagate(model, x0, c, 0.0, 0.65, cfg).final_state();
  const Vector rest = propagate(model, first, c, 0.65, 1.6, cfg).final_state();
  CHECK((direct - rest).norm() <= 1e-12);
}

TEST_CASE("blowup is reported") {
  const bangbang::testing::Linear model(1e10);
  const BangBangControl c(on_off_bounds(1), {0}, {}, 1.0);
  CHECK_THROWS_AS(propagate(model, vec({1.0}), c, 0.0, 1.0, {0.1}), IntegrationBlowup);
}

TEST_CASE("trajectory CSV") {
  Trajectory t{{0.0, 0.5}, {vec({1, 2}), vec({3, 4})}};
  std::ostringstream out;
  write_trajectory_csv(out, t);
  CHECK(out.str() == "t,x_1,x_2\n0,1,2\n0.5,3,4\n");
}
