#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ganno::schedules {

enum class ScheduleKind {
  constant,
  linear,
  quadratic,
  cosine,
  exponential,
  piecewise,
  sgdr,
  warmup_cosine,
  cosine_one_cycle,
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);
const std::vector<ScheduleKind>& all_kinds();

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 1e-3;  // initial value, or peak for warm-up kinds and SGDR
  std::int64_t total_steps = 1000;

  // linear/quadratic/cosine and the decay phase of the warm-up kinds end at
  // end_fraction * base_lr; exponential reaches exp_end_fraction * base_lr.
  double end_fraction = 0.0;
  double exp_end_fraction = 0.01;

  // Piecewise: the multiplier for segment k applies from breakpoint k-1
  // (fraction of total_steps) up to breakpoint k.
  std::vector<double> piecewise_breakpoints = {1.0 / 3.0, 2.0 / 3.0};
  std::vector<double> piecewise_multipliers = {1.0, 0.1, 0.01};

  // SGDR: first period in steps (0 means total_steps / 4), period
  // multiplier, and the floor reached at the end of each period.
  std::int64_t sgdr_period = 0;
  double sgdr_multiplier = 1.0;
  double sgdr_floor_fraction = 0.0;

  // Warm-up kinds rise from warmup_start_fraction * base_lr to base_lr over
  // round(warmup_fraction * total_steps) steps.
  double warmup_fraction = 0.1;
  double warmup_start_fraction = 1e-3;

  void validate() const;  // throws ConfigError
  std::int64_t first_period() const;
  std::int64_t warmup_steps() const;
};

// Throws RangeError when step is outside [0, total_steps].
double lr_at(const ScheduleSpec& spec, std::int64_t step);

// (step, lr) samples at 0, stride, 2*stride, ... with total_steps always
// included. Throws ConfigError when stride < 1.
std::vector<std::pair<std::int64_t, double>> schedule_table(
    const ScheduleSpec& spec, std::int64_t stride);

// Two-column CSV with header "step,lr".
std::string schedule_csv(const ScheduleSpec& spec, std::int64_t stride);

// Steps > 0 at which SGDR restarts (returns to the peak).
std::vector<std::int64_t> sgdr_restarts(const ScheduleSpec& spec);

}  // namespace ganno::schedules
