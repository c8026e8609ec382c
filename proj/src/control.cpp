#include "bangbang/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bangbang/errors.hpp"

namespace bangbang {

void ChannelBounds::validate() const {
  if (lower.empty() || lower.size() != upper.size()) {
    throw std::invalid_argument("channel bounds need m >= 1 matching lower/upper entries");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw std::invalid_argument("channel bounds require lower < upper on every channel");
    }
  }
}

namespace {

void check_event_order(std::span<const SwitchingEvent> events, double final_time) {
  double previous = 0.0;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const double t = events[k].time;
    if (!std::isfinite(t) || !(t > previous) || !(t < final_time)) {
      std::ostringstream msg;
      msg << "switching time #" << k << " (" << t << ") breaks 0 < t_1 < ... < t_N < t_f";
      throw OrderViolation(msg.str());
    }
    previous = t;
  }
}

double flipped(double value, double lower, double upper) {
  return value == lower ? upper : lower;
}

}  // namespace

BangBangControl::BangBangControl(ChannelBounds bounds, std::vector<double> initial_values,
                                 std::vector<SwitchingEvent> events, double final_time)
    : bounds_(std::move(bounds)),
      initial_(std::move(initial_values)),
      events_(std::move(events)),
      final_time_(final_time) {
  bounds_.validate();
  if (initial_.size() != bounds_.channels()) {
    throw std::invalid_argument("one initial value per channel expected");
  }
  for (std::size_t i = 0; i < initial_.size(); ++i) {
    if (initial_[i] != bounds_.lower[i] && initial_[i] != bounds_.upper[i]) {
      throw std::invalid_argument("initial control values must be bang values");
    }
  }
  if (!(final_time_ > 0.0) || !std::isfinite(final_time_)) {
    throw std::invalid_argument("final time must be positive");
  }
  for (const auto& e : events_) {
    if (e.channel >= bounds_.channels()) {
      throw std::invalid_argument("switching event refers to an unknown channel");
    }
  }
  check_event_order(events_, final_time_);
}

std::vector<double> BangBangControl::times() const {
  std::vector<double> out(events_.size());
  std::ranges::transform(events_, out.begin(), &SwitchingEvent::time);
  return out;
}

std::vector<std::size_t> BangBangControl::channel_sequence() const {
  std::vector<std::size_t> out(events_.size());
  std::ranges::transform(events_, out.begin(), &SwitchingEvent::channel);
  return out;
}

BangBangControl BangBangControl::with_times(std::span<const double> times) const {
  if (times.size() != events_.size()) {
    throw std::invalid_argument("with_times: one time per event expected");
  }
  auto events = events_;
  for (std::size_t k = 0; k < events.size(); ++k) events[k].time = times[k];
  return BangBangControl(bounds_, initial_, std::move(events), final_time_);
}

BangBangControl BangBangControl::with_final_time(double final_time) const {
  return BangBangControl(bounds_, initial_, events_, final_time);
}

Vector BangBangControl::value_after_count(std::size_t count) const {
  Vector u = Eigen::Map<const Vector>(initial_.data(), static_cast<Eigen::Index>(initial_.size()));
  for (std::size_t k = 0; k < count; ++k) {
    const auto c = events_[k].channel;
    u[static_cast<Eigen::Index>(c)] =
        flipped(u[static_cast<Eigen::Index>(c)], bounds_.lower[c], bounds_.upper[c]);
  }
  return u;
}

Vector BangBangControl::value_at(double t) const {
  if (!(t >= 0.0 && t <= final_time_)) {
    std::ostringstream msg;
    msg << "value_at: t=" << t << " outside [0, " << final_time_ << "]";
    throw DomainError(msg.str());
  }
  const auto it = std::ranges::upper_bound(events_, t, {}, &SwitchingEvent::time);
  return value_after_count(static_cast<std::size_t>(it - events_.begin()));
}

Vector BangBangControl::value_before(std::size_t k) const {
  if (k >= events_.size()) throw std::out_of_range("event index");
  return value_after_count(k);
}

Vector BangBangControl::value_after(std::size_t k) const {
  if (k >= events_.size()) throw std::out_of_range("event index");
  return value_after_count(k + 1);
}

bool BangBangControl::switches_up(std::size_t k) const {
  const auto c = events_.at(k).channel;
  return value_before(k)[static_cast<Eigen::Index>(c)] == bounds_.lower[c];
}

std::size_t BangBangControl::events_after(double t) const {
  const auto it = std::ranges::upper_bound(events_, t, {}, &SwitchingEvent::time);
  return static_cast<std::size_t>(events_.end() - it);
}

BangBangControl insert_needle(const BangBangControl& control, std::size_t channel,
                              double s_open, double s_close) {
  if (channel >= control.channels()) throw std::invalid_argument("insert_needle: unknown channel");
  if (!(s_open < s_close) || !(s_open > 0.0) || !(s_close < control.final_time())) {
    throw DomainError("insert_needle: need 0 < s_open < s_close < t_f");
  }
  std::vector<SwitchingEvent> events(control.events().begin(), control.events().end());
  for (const auto& e : events) {
    if (e.time == s_open || e.time == s_close) {
      throw OrderViolation("insert_needle: needle time coincides with an existing switching");
    }
  }
  events.push_back({s_open, channel});
  events.push_back({s_close, channel});
  std::ranges::sort(events, {}, &SwitchingEvent::time);
  return BangBangControl(control.bounds(), control.initial_values(), std::move(events),
                         control.final_time());
}

bool validate_gaps(const BangBangControl& control, const GapPolicy& policy) {
  const auto events = control.events();
  if (events.empty()) return true;
  if (events.front().time < policy.eta) return false;
  if (events.back().time > control.final_time() - policy.eta) return false;
  for (std::size_t k = 1; k < events.size(); ++k) {
    if (events[k].time - events[k - 1].time < policy.eta) return false;
  }
  return true;
}

BangBangControl apply_shift(const BangBangControl& control, std::span<const double> shift,
                            double frozen_before) {
  const std::size_t movable = control.events_after(frozen_before);
  if (shift.size() != movable) {
    throw std::invalid_argument("apply_shift: one shift entry per movable event expected");
  }
  std::vector<SwitchingEvent> events(control.events().begin(), control.events().end());
  const std::size_t first = events.size() - movable;
  for (std::size_t k = 0; k < movable; ++k) {
    auto& e = events[first + k];
    e.time += shift[k];
    if (!(e.time > frozen_before) || !(e.time < control.final_time())) {
      throw OrderViolation("apply_shift: shifted switching leaves (frozen_before, t_f)");
    }
  }
  // The constructor rejects any interchange.
  return BangBangControl(control.bounds(), control.initial_values(), std::move(events),
                         control.final_time());
}

}  // namespace bangbang
