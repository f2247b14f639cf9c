#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ganno/errors.hpp"
#include "ganno/schedules.hpp"

using namespace ganno;
using namespace ganno::schedules;

namespace {

ScheduleSpec make(ScheduleKind kind, double lr, std::int64_t steps) {
  ScheduleSpec s;
  s.kind = kind;
  s.base_lr = lr;
  s.total_steps = steps;
  return s;
}

}  // namespace

TEST_CASE("constant schedule is exact everywhere") {
  const ScheduleSpec s = make(ScheduleKind::constant, 0.003, 500);
  for (std::int64_t t = 0; t <= 500; ++t) REQUIRE(lr_at(s, t) == 0.003);
}

TEST_CASE("decay endpoints") {
  const ScheduleSpec lin = make(ScheduleKind::linear, 0.001, 300);
  CHECK(lr_at(lin, 0) == 0.001);
  CHECK(lr_at(lin, 300) == 0.0);

  ScheduleSpec quad = make(ScheduleKind::quadratic, 0.002, 300);
  quad.end_fraction = 0.25;
  CHECK(std::abs(lr_at(quad, 300) - 0.0005) < 1e-12);

  const ScheduleSpec cos = make(ScheduleKind::cosine, 0.01, 1000);
  // Half-way: 0.5 * a0 * (1 + cos(pi / 2)).
  const double half = 0.5 * 0.01 * (1.0 + std::cos(std::numbers::pi / 2.0));
  CHECK(std::abs(lr_at(cos, 500) - 0.005) < 1e-12);
  CHECK(std::abs(lr_at(cos, 500) - half) < 1e-15);
  CHECK(std::abs(lr_at(cos, 1000)) < 1e-12);

  const ScheduleSpec expo = make(ScheduleKind::exponential, 0.01, 200);
  CHECK(std::abs(lr_at(expo, 200) - 0.0001) < 1e-12);
  CHECK(std::abs(lr_at(expo, 100) - 0.001) < 1e-12);

  const ScheduleSpec pw = make(ScheduleKind::piecewise, 0.01, 300);
  CHECK(lr_at(pw, 0) == 0.01);
  CHECK(lr_at(pw, 150) == 0.01 * 0.1);
  CHECK(lr_at(pw, 300) == 0.01 * 0.01);
}

TEST_CASE("SGDR restarts at the peak") {
  ScheduleSpec s = make(ScheduleKind::sgdr, 0.004, 400);
  CHECK(s.first_period() == 100);
  CHECK(lr_at(s, 0) == 0.004);
  for (std::int64_t r : {100, 200, 300, 400}) CHECK(lr_at(s, r) == 0.004);
  CHECK(std::abs(lr_at(s, 50) - 0.002) < 1e-12);
  CHECK(lr_at(s, 99) < 0.0001);
  CHECK(sgdr_restarts(s) == std::vector<std::int64_t>{100, 200, 300, 400});

  SUBCASE("within a period the curve is a cosine from peak to floor") {
    s.sgdr_floor_fraction = 0.1;
    for (std::int64_t t = 200; t < 300; ++t) {
      const double q = (t - 200) / 100.0;
      const double expect =
          0.0004 + 0.5 * (0.004 - 0.0004) * (1.0 + std::cos(std::numbers::pi * q));
      REQUIRE(std::abs(lr_at(s, t) - expect) < 1e-15);
    }
  }
  SUBCASE("growing periods") {
    s.sgdr_period = 50;
    s.sgdr_multiplier = 2.0;
    CHECK(sgdr_restarts(s) == std::vector<std::int64_t>{50, 150, 350});
  }
}

TEST_CASE("warm-up kinds peak at the warm-up boundary") {
  for (ScheduleKind kind : {ScheduleKind::warmup_cosine, ScheduleKind::cosine_one_cycle}) {
    const ScheduleSpec s = make(kind, 0.002, 500);
    CAPTURE(to_string(kind));
    REQUIRE(s.warmup_steps() == 50);
    CHECK(std::abs(lr_at(s, 0) - 0.002 / 1000.0) < 1e-12);
    CHECK(lr_at(s, 0) <= 0.01 * 0.002);
    CHECK(std::abs(lr_at(s, 50) - 0.002) < 1e-12);
    CHECK(std::abs(lr_at(s, 500)) < 1e-12);
    std::int64_t argmax = 0;
    int at_max = 0;
    double best = -1.0;
    for (std::int64_t t = 0; t <= 500; ++t) {
      const double v = lr_at(s, t);
      if (v > best) {
        best = v;
        argmax = t;
        at_max = 1;
      } else if (v == best) {
        ++at_max;
      }
    }
    CHECK(argmax == 50);
    CHECK(at_max == 1);
  }
}

TEST_CASE("every schedule is non-negative and total over its range") {
  for (ScheduleKind kind : all_kinds()) {
    const ScheduleSpec s = make(kind, 0.01, 97);
    REQUIRE_NOTHROW(s.validate());
    CAPTURE(to_string(kind));
    for (std::int64_t t = 0; t <= 97; ++t) {
      const double v = lr_at(s, t);
      REQUIRE(std::isfinite(v));
      REQUIRE(v >= 0.0);
      REQUIRE(v == lr_at(s, t));
    }
    CHECK_THROWS_AS(lr_at(s, -1), RangeError);
    CHECK_THROWS_AS(lr_at(s, 98), RangeError);
    CHECK(schedule_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(schedule_kind_from_string("triangle"), ConfigError);
}

TEST_CASE("decay family is monotone non-increasing") {
  for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::quadratic,
                            ScheduleKind::cosine, ScheduleKind::exponential,
                            ScheduleKind::piecewise}) {
    const ScheduleSpec s = make(kind, 0.05, 1234);
    CAPTURE(to_string(kind));
    for (std::int64_t t = 1; t <= 1234; ++t) REQUIRE(lr_at(s, t) <= lr_at(s, t - 1));
  }
}

TEST_CASE("schedule_table") {
  const auto c = schedule_table(make(ScheduleKind::constant, 0.1, 10), 5);
  REQUIRE(c.size() == 3);
  CHECK(c[0].first == 0);
  CHECK(c[2].first == 10);
  CHECK(c[0].second == c[1].second);
  CHECK(c[1].second == c[2].second);

  const auto lin = schedule_table(make(ScheduleKind::linear, 0.1, 103), 7);
  CHECK(lin.back().first == 103);
  for (std::size_t i = 1; i < lin.size(); ++i) CHECK(lin[i].second <= lin[i - 1].second);

  CHECK_THROWS_AS(schedule_table(make(ScheduleKind::constant, 0.1, 10), 0), ConfigError);

  SUBCASE("SGDR peak count follows from the period") {
    for (std::int64_t total : {400, 1000, 1200}) {
      for (std::int64_t period : {50, 100, 200}) {
        ScheduleSpec s = make(ScheduleKind::sgdr, 0.003, total);
        s.sgdr_period = period;
        int peaks = 0;
        for (const auto& [t, lr] : schedule_table(s, 10)) {
          if (t > 0 && lr == 0.003) ++peaks;
        }
        CHECK(peaks == total / period);
      }
    }
  }
}

TEST_CASE("schedule_csv") {
  const std::string csv = schedule_csv(make(ScheduleKind::constant, 0.5, 2), 1);
  CHECK(csv == "step,lr\n0,0.5\n1,0.5\n2,0.5\n");
}

TEST_CASE("invalid schedules are rejected") {
  ScheduleSpec s = make(ScheduleKind::constant, 0.0, 10);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = make(ScheduleKind::piecewise, 0.1, 10);
  s.piecewise_multipliers = {1.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = make(ScheduleKind::warmup_cosine, 0.1, 3);
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
