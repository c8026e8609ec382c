#include "bangbang/endpoint.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bangbang/errors.hpp"

namespace bangbang {

namespace {

/// State plus a block of sensitivity columns, stepped together on the RK4 grid.
struct Augmented {
  Vector x;
  Matrix v;
};

void rk4_augmented(const DynamicsModel& model, double t, double h, const Vector& u, Augmented& s) {
  const double th = t + 0.5 * h;
  const Vector k1x = model.rhs(t, s.x, u);
  const Matrix k1v = model.jacobian_x(t, s.x, u) * s.v;
  const Vector x2 = s.x + 0.5 * h * k1x;
  const Vector k2x = model.rhs(th, x2, u);
  const Matrix k2v = model.jacobian_x(th, x2, u) * (s.v + 0.5 * h * k1v);
  const Vector x3 = s.x + 0.5 * h * k2x;
  const Vector k3x = model.rhs(th, x3, u);
  const Matrix k3v = model.jacobian_x(th, x3, u) * (s.v + 0.5 * h * k2v);
  const Vector x4 = s.x + h * k3x;
  const Vector k4x = model.rhs(t + h, x4, u);
  const Matrix k4v = model.jacobian_x(t + h, x4, u) * (s.v + h * k3v);
  s.x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  s.v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

/// Integrates state and switching-time sensitivities in physical time from
/// `from` to `to`. Each event strictly inside the span seeds its column when
/// it is crossed; crossing in reverse flips the seed so that columns are
/// derivatives with respect to the event time itself. A snapshot is taken at
/// every time in `samples` (which must lie in the span, in travel order).
std::vector<EndpointSensitivity> sensitivity_sweep(const DynamicsModel& model,
                                                   const BangBangControl& control,
                                                   const Vector& x_start, double from, double to,
                                                   std::span<const double> samples,
                                                   const IntegratorConfig& config) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  if (x_start.size() != n || !x_start.allFinite()) {
    throw std::invalid_argument("initial state must be finite and match the model dimension");
  }
  const bool forward = from <= to;
  const auto events = control.events();

  Augmented s{x_start, Matrix::Zero(n, 0)};
  // Active columns form a contiguous block of event indices [first, first + count).
  std::size_t first = forward ? 0 : events.size();
  std::size_t count = 0;
  if (forward) {
    first = static_cast<std::size_t>(
        std::ranges::upper_bound(events, from, {}, &SwitchingEvent::time) - events.begin());
  }

  std::vector<EndpointSensitivity> out;
  out.reserve(samples.size());
  std::size_t next_sample = 0;
  auto snapshot = [&](double t) {
    while (next_sample < samples.size() && samples[next_sample] == t) {
      EndpointSensitivity e;
      e.state = s.x;
      e.differential.matrix = s.v;
      for (std::size_t k = 0; k < count; ++k) e.differential.column_index.push_back(first + k);
      out.push_back(std::move(e));
      ++next_sample;
    }
  };
  auto seed = [&](std::size_t k) {
    const Vector jump = model.switch_jump(events[k].time, s.x, control.value_before(k),
                                          control.value_after(k));
    Matrix grown(n, s.v.cols() + 1);
    if (forward) {
      grown << s.v, jump;
    } else {
      grown << -jump, s.v;
      first = k;
    }
    s.v = std::move(grown);
    ++count;
  };

  snapshot(from);
  const auto pts = detail::breakpoints(control, from, to, samples);
  for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
    const double a = pts[seg];
    const double b = pts[seg + 1];
    const Vector u = control.value_at(0.5 * (a + b));
    const std::size_t steps = detail::step_count(b - a, config.base_step);
    const double h = (b - a) / static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const double t = a + static_cast<double>(i) * h;
      rk4_augmented(model, t, h, u, s);
      if (!s.x.allFinite() || !s.v.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite state or sensitivity near t=" << t + h;
        throw IntegrationBlowup(msg.str());
      }
    }
    snapshot(b);
    if (b != to) {
      // Event times at b: seed after the snapshot, so a sample sitting on an
      // event does not count that event as still movable.
      for (std::size_t k = 0; k < events.size(); ++k) {
        if (events[k].time == b) seed(k);
      }
    }
  }
  if (next_sample != samples.size()) {
    throw std::invalid_argument("sensitivity sweep: sample times outside the span or out of order");
  }
  return out;
}

}  // namespace

Vector endpoint(const DynamicsModel& model, const Vector& x0, const BangBangControl& control,
                const IntegratorConfig& config) {
  return propagate_final_state(model, x0, control, 0.0, control.final_time(), config);
}

Vector variation_vector(const DynamicsModel& model, const Trajectory& trajectory,
                        const BangBangControl& control, std::size_t event_index,
                        const IntegratorConfig& config) {
  if (event_index >= control.event_count()) throw std::out_of_range("variation_vector: event index");
  if (trajectory.size() == 0) throw std::invalid_argument("variation_vector: empty trajectory");
  const double tj = control.event(event_index).time;
  const double horizon = trajectory.times.back();
  const auto it = std::ranges::find(trajectory.times, tj);
  if (it == trajectory.times.end()) {
    throw std::invalid_argument("variation_vector: switching time is not a trajectory node");
  }
  const Vector& xj = trajectory.states[static_cast<std::size_t>(it - trajectory.times.begin())];
  const Vector jump =
      model.switch_jump(tj, xj, control.value_before(event_index), control.value_after(event_index));
  if (horizon == tj) return jump;

  Augmented s{xj, jump};
  const auto pts = detail::breakpoints(control, tj, horizon);
  for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
    const double a = pts[seg];
    const double b = pts[seg + 1];
    const Vector u = control.value_at(0.5 * (a + b));
    const std::size_t steps = detail::step_count(b - a, config.base_step);
    const double h = (b - a) / static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      rk4_augmented(model, a + static_cast<double>(i) * h, h, u, s);
    }
  }
  if (!s.v.allFinite()) throw IntegrationBlowup("variation_vector: non-finite variation");
  return s.v.col(0);
}

EndpointSensitivity endpoint_sensitivity(const DynamicsModel& model, const Vector& x0,
                                         const BangBangControl& control,
                                         const IntegratorConfig& config) {
  const double tf = control.final_time();
  const double samples[] = {tf};
  auto out = sensitivity_sweep(model, control, x0, 0.0, tf, samples, config);
  return std::move(out.front());
}

EndpointDifferential d_endpoint(const DynamicsModel& model, const Vector& x0,
                                const BangBangControl& control, const IntegratorConfig& config) {
  if (control.event_count() == 0) throw std::invalid_argument("d_endpoint: control has no switching");
  return endpoint_sensitivity(model, x0, control, config).differential;
}

Vector backward_endpoint(const DynamicsModel& model, double t, const BangBangControl& control,
                         const Vector& target, const IntegratorConfig& config) {
  const double tf = control.final_time();
  if (!(t >= 0.0 && t <= tf)) throw DomainError("backward_endpoint: need 0 <= t <= t_f");
  return propagate_backward_final_state(model, target, control, tf - t, config);
}

EndpointDifferential d_backward_endpoint(const DynamicsModel& model, double t,
                                         const BangBangControl& control, const Vector& target,
                                         const IntegratorConfig& config) {
  const double tf = control.final_time();
  if (!(t >= 0.0 && t <= tf)) throw DomainError("d_backward_endpoint: need 0 <= t <= t_f");
  if (control.events_after(t) == 0) {
    std::ostringstream msg;
    msg << "no switching time left after t=" << t;
    throw NoFreedomLeft(msg.str());
  }
  const double samples[] = {t};
  auto out = sensitivity_sweep(model, control, target, tf, t, samples, config);
  return std::move(out.front().differential);
}

std::vector<EndpointSensitivity> backward_sensitivity_profile(const DynamicsModel& model,
                                                              const BangBangControl& control,
                                                              const Vector& target,
                                                              std::span<const double> times,
                                                              const IntegratorConfig& config) {
  if (times.empty()) return {};
  if (!std::ranges::is_sorted(times) || times.front() < 0.0 ||
      times.back() > control.final_time()) {
    throw DomainError("backward_sensitivity_profile: times must be ascending inside [0, t_f]");
  }
  std::vector<double> reversed(times.rbegin(), times.rend());
  auto out = sensitivity_sweep(model, control, target, control.final_time(), times.front(),
                               reversed, config);
  std::ranges::reverse(out);
  return out;
}

void write_differential_csv(std::ostream& out, const EndpointDifferential& differential) {
  for (std::size_t k = 0; k < differential.columns(); ++k) {
    out << (k ? "," : "") << "event_" << (differential.column_index[k] + 1);
  }
  out << '\n';
  const auto old_precision = out.precision(17);
  for (Eigen::Index i = 0; i < differential.matrix.rows(); ++i) {
    for (Eigen::Index k = 0; k < differential.matrix.cols(); ++k) {
      out << (k ? "," : "") << differential.matrix(i, k);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace bangbang
