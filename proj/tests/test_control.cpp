#include <random>

#include "bangbang/control.hpp"
#include "bangbang/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace bangbang;
using bangbang::testing::vec;

namespace {

BangBangControl four_channel(std::vector<SwitchingEvent> events, double tf = 1.0) {
  return BangBangControl(on_off_bounds(4), {0, 0, 0, 0}, std::move(events), tf);
}

}  // namespace

TEST_CASE("bounds validation") {
  CHECK_THROWS_AS(ChannelBounds({}, {}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelBounds({1.0}, {1.0}).validate(), std::invalid_argument);
  CHECK_NOTHROW(ChannelBounds({-1.0}, {2.0}).validate());
}

TEST_CASE("construction rejects inadmissible controls") {
  CHECK_THROWS_AS(four_channel({{0.5, 0}, {0.5, 1}}), OrderViolation);
  CHECK_THROWS_AS(four_channel({{0.6, 0}, {0.5, 1}}), OrderViolation);
  CHECK_THROWS_AS(four_channel({{0.0, 0}}), OrderViolation);
  CHECK_THROWS_AS(four_channel({{1.0, 0}}), OrderViolation);
  CHECK_THROWS_AS(four_channel({{0.5, 4}}), std::invalid_argument);
  CHECK_THROWS_AS(BangBangControl(on_off_bounds(2), {0.5, 0.0}, {}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(BangBangControl(on_off_bounds(2), {0.0}, {}, 1.0), std::invalid_argument);
}

TEST_CASE("value_at without events is the initial value") {
  const BangBangControl c(on_off_bounds(2), {0, 1}, {}, 2.0);
  for (double t : {0.0, 0.3, 1.7, 2.0}) CHECK(c.value_at(t) == vec({0, 1}));
}

TEST_CASE("value_at single flip") {
  const BangBangControl c(on_off_bounds(1), {0}, {{1.0, 0}}, 2.0);
  CHECK(c.value_at(1.5)[0] == 1.0);
  CHECK(c.value_at(0.5)[0] == 0.0);
  CHECK(c.value_at(1.0)[0] == 1.0);  // right-continuous
}

TEST_CASE("value_at flips per channel") {
  const auto c = four_channel({{0.2, 0}, {0.5, 0}, {0.7, 2}});
  CHECK(c.value_at(0.6) == vec({0, 0, 0, 0}));
  CHECK(c.value_at(0.3) == vec({1, 0, 0, 0}));
  CHECK(c.value_at(0.8) == vec({0, 0, 1, 0}));
  CHECK(c.value_before(2) == vec({0, 0, 0, 0}));
  CHECK(c.value_after(2) == vec({0, 0, 1, 0}));
  CHECK(c.switches_up(0));
  CHECK_FALSE(c.switches_up(1));
}

TEST_CASE("value_at outside the horizon") {
  const auto c = four_channel({{0.2, 0}});
  CHECK_THROWS_AS(c.value_at(-1e-12), DomainError);
  CHECK_THROWS_AS(c.value_at(1.0 + 1e-12), DomainError);
}

TEST_CASE("general bounds alternate between extremes") {
  const BangBangControl c(ChannelBounds({-2.0}, {3.0}), {3.0}, {{0.1, 0}, {0.2, 0}}, 1.0);
  CHECK(c.value_at(0.05)[0] == 3.0);
  CHECK(c.value_at(0.15)[0] == -2.0);
  CHECK(c.value_at(0.25)[0] == 3.0);
}

TEST_CASE("events_after counts strictly later events") {
  const auto c = four_channel({{0.2, 0}, {0.5, 1}, {0.7, 2}});
  CHECK(c.events_after(0.0) == 3);
  CHECK(c.events_after(0.2) == 2);
  CHECK(c.events_after(0.69) == 1);
  CHECK(c.events_after(0.7) == 0);
}

TEST_CASE("insert_needle") {
  const BangBangControl empty(on_off_bounds(2), {0, 0}, {}, 1.0);
  const auto a = insert_needle(empty, 1, 0.3, 0.4);
  REQUIRE(a.event_count() == 2);
  CHECK(a.event(0) == SwitchingEvent{0.3, 1});
  CHECK(a.event(1) == SwitchingEvent{0.4, 1});

  const BangBangControl one(on_off_bounds(1), {0}, {{0.5, 0}}, 1.0);
  const auto b = insert_needle(one, 0, 0.6, 0.7);
  CHECK(b.times() == std::vector<double>{0.5, 0.6, 0.7});
  CHECK(b.value_at(0.55)[0] == 1.0);
  CHECK(b.value_at(0.65)[0] == 0.0);
  CHECK(b.value_at(0.75)[0] == 1.0);

  CHECK_THROWS_AS(insert_needle(one, 0, 0.5, 0.7), OrderViolation);
  CHECK_THROWS_AS(insert_needle(one, 0, 0.7, 0.6), DomainError);
  CHECK_THROWS_AS(insert_needle(one, 0, 0.0, 0.2), DomainError);
  CHECK_THROWS_AS(insert_needle(one, 0, 0.8, 1.0), DomainError);
}

TEST_CASE("validate_gaps") {
  const auto a = four_channel({{0.1, 0}, {0.2, 1}, {0.3, 2}});
  CHECK(validate_gaps(a, {0.05}));
  const auto b = four_channel({{0.10, 0}, {0.14, 1}});
  CHECK_FALSE(validate_gaps(b, {0.05}));
  const auto c = four_channel({{0.02, 0}});
  CHECK_FALSE(validate_gaps(c, {0.05}));
  const auto d = four_channel({{0.98, 0}});
  CHECK_FALSE(validate_gaps(d, {0.05}));
  CHECK(validate_gaps(d, {0.0}));
}

TEST_CASE("apply_shift") {
  const auto c = four_channel({{0.3, 0}, {0.5, 1}});
  const std::vector<double> zero{0.0, 0.0};
  CHECK(apply_shift(c, zero, 0.0) == c);

  const std::vector<double> inward{0.05, -0.05};
  CHECK(apply_shift(c, inward, 0.0).times() == std::vector<double>{0.35, 0.45});

  const auto close = four_channel({{0.3, 0}, {0.35, 1}});
  const std::vector<double> swap{0.04, -0.02};
  CHECK_THROWS_AS(apply_shift(close, swap, 0.0), OrderViolation);

  // Only events after the frozen instant move.
  const std::vector<double> tail{0.1};
  CHECK(apply_shift(c, tail, 0.4).times() == std::vector<double>{0.3, 0.6});
  const std::vector<double> back{-0.15};
  CHECK_THROWS_AS(apply_shift(c, back, 0.4), OrderViolation);
  const std::vector<double> past{0.6};
  CHECK_THROWS_AS(apply_shift(c, past, 0.4), OrderViolation);
  CHECK_THROWS_AS(apply_shift(c, zero, 0.4), std::invalid_argument);
}

TEST_CASE("property: one flip per channel event") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = bangbang::testing::random_control(rng, 4, 7, 2.0, 0.01);
    std::vector<int> flips(4, 0);
    Vector prev = c.value_at(0.0);
    for (int i = 1; i <= 4000; ++i) {
      const Vector now = c.value_at(2.0 * i / 4000.0);
      for (int ch = 0; ch < 4; ++ch) flips[static_cast<std::size_t>(ch)] += now[ch] != prev[ch];
      prev = now;
    }
    std::vector<int> expected(4, 0);
    for (const auto& e : c.events()) ++expected[e.channel];
    CHECK(flips == expected);
  }
}

TEST_CASE("property: a needle only changes the control inside its interval") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = bangbang::testing::random_control(rng, 4, 4, 1.0, 0.05);
    const double open = 0.02 + 0.9 * unit(rng);
    const double close = open + 0.01;
    const std::size_t channel = static_cast<std::size_t>(trial % 4);
    BangBangControl n = c;
    try {
      n = insert_needle(c, channel, open, close);
    } catch (const OrderViolation&) {
      continue;
    }
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      if (t >= open && t < close) {
        CHECK(n.value_at(t)[static_cast<Eigen::Index>(channel)] !=
              c.value_at(t)[static_cast<Eigen::Index>(channel)]);
      } else {
        CHECK(n.value_at(t) == c.value_at(t));
      }
    }
  }
}

TEST_CASE("property: gap validity is monotone in eta") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = bangbang::testing::random_control(rng, 4, 5, 1.0, 0.0);
    for (double eta = 0.0; eta < 0.3; eta += 0.01) {
      if (validate_gaps(c, {eta})) {
        CHECK(validate_gaps(c, {0.5 * eta}));
        CHECK(validate_gaps(c, {0.0}));
      }
    }
  }
}
