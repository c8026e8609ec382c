#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bangbang {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Box of admissible control values, one [lower, upper] interval per channel.
struct ChannelBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t channels() const noexcept { return lower.size(); }
  /// Throws std::invalid_argument unless lower[i] < upper[i] for m >= 1 channels.
  void validate() const;

  friend bool operator==(const ChannelBounds&, const ChannelBounds&) = default;
};

/// One channel flipping between its extreme values. Channels are 0-based in
/// code; serialized forms use 1-based indices.
struct SwitchingEvent {
  double time = 0.0;
  std::size_t channel = 0;

  friend bool operator==(const SwitchingEvent&, const SwitchingEvent&) = default;
};

/// Minimum dwell time between consecutive switchings (and at the horizon ends).
struct GapPolicy {
  double eta = 0.0;
};

/// A bang-bang control reduced to its switching sequence: initial channel
/// values, time-ordered single-channel switching events, and the final time.
///
/// Value semantics; every modifier returns a new control. The constructor
/// enforces 0 < t_1 < ... < t_N < t_f and initial values on the box corners.
class BangBangControl {
 public:
  BangBangControl(ChannelBounds bounds, std::vector<double> initial_values,
                  std::vector<SwitchingEvent> events, double final_time);

  const ChannelBounds& bounds() const noexcept { return bounds_; }
  const std::vector<double>& initial_values() const noexcept { return initial_; }
  std::span<const SwitchingEvent> events() const noexcept { return events_; }
  const SwitchingEvent& event(std::size_t k) const { return events_.at(k); }
  double final_time() const noexcept { return final_time_; }
  std::size_t channels() const noexcept { return bounds_.channels(); }
  std::size_t event_count() const noexcept { return events_.size(); }

  std::vector<double> times() const;
  std::vector<std::size_t> channel_sequence() const;

  /// Same structure with new switching times (flat event order). Throws
  /// OrderViolation if the times are not admissible.
  BangBangControl with_times(std::span<const double> times) const;
  BangBangControl with_final_time(double final_time) const;

  /// u(t), right-continuous at switching times. Throws DomainError outside [0, t_f].
  Vector value_at(double t) const;
  /// u(t_k^-) and u(t_k^+) for the k-th event.
  Vector value_before(std::size_t k) const;
  Vector value_after(std::size_t k) const;
  /// True if event k moves its channel from the lower to the upper value.
  bool switches_up(std::size_t k) const;

  /// Number of events with time strictly greater than t.
  std::size_t events_after(double t) const;

  friend bool operator==(const BangBangControl&, const BangBangControl&) = default;

 private:
  Vector value_after_count(std::size_t count) const;

  ChannelBounds bounds_;
  std::vector<double> initial_;
  std::vector<SwitchingEvent> events_;
  double final_time_;
};

/// Adds the pair (s_open, channel), (s_close, channel) to the event list.
/// Throws DomainError for an empty or out-of-horizon interval and
/// OrderViolation if either time collides with an existing event.
BangBangControl insert_needle(const BangBangControl& control, std::size_t channel,
                              double s_open, double s_close);

/// Consecutive events at least eta apart, first event >= eta, last <= t_f - eta.
bool validate_gaps(const BangBangControl& control, const GapPolicy& policy);

/// Shifts every event with time > frozen_before by the matching entry of
/// `shift`. Throws OrderViolation if the shifted list interchanges events or
/// leaves (frozen_before, t_f).
BangBangControl apply_shift(const BangBangControl& control, std::span<const double> shift,
                            double frozen_before);

}  // namespace bangbang
