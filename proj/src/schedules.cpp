#include "ganno/schedules.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ganno/errors.hpp"
#include "ganno/format.hpp"

namespace ganno::schedules {

namespace {

struct KindName {
  ScheduleKind kind;
  const char* name;
};

constexpr KindName kNames[] = {
    {ScheduleKind::constant, "constant"},
    {ScheduleKind::linear, "linear"},
    {ScheduleKind::quadratic, "quadratic"},
    {ScheduleKind::cosine, "cosine"},
    {ScheduleKind::exponential, "exponential"},
    {ScheduleKind::piecewise, "piecewise"},
    {ScheduleKind::sgdr, "sgdr"},
    {ScheduleKind::warmup_cosine, "warmup_cosine"},
    {ScheduleKind::cosine_one_cycle, "cosine_one_cycle"},
};

double cosine_decay(double from, double to, double progress) {
  return to + 0.5 * (from - to) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kNames) {
    if (name == n) return k;
  }
  throw ConfigError("unknown schedule kind '" + name + "'");
}

const std::vector<ScheduleKind>& all_kinds() {
  static const std::vector<ScheduleKind> kinds = [] {
    std::vector<ScheduleKind> out;
    for (const auto& kn : kNames) out.push_back(kn.kind);
    return out;
  }();
  return kinds;
}

std::int64_t ScheduleSpec::first_period() const {
  return sgdr_period > 0 ? sgdr_period : std::max<std::int64_t>(1, total_steps / 4);
}

std::int64_t ScheduleSpec::warmup_steps() const {
  return std::llround(warmup_fraction * static_cast<double>(total_steps));
}

void ScheduleSpec::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("schedule base_lr must be positive");
  if (total_steps < 1) throw ConfigError("schedule total_steps must be >= 1");
  if (!(end_fraction >= 0.0 && end_fraction <= 1.0)) {
    throw ConfigError("end_fraction must be in [0, 1]");
  }
  switch (kind) {
    case ScheduleKind::exponential:
      if (!(exp_end_fraction > 0.0 && exp_end_fraction <= 1.0)) {
        throw ConfigError("exp_end_fraction must be in (0, 1]");
      }
      break;
    case ScheduleKind::piecewise: {
      if (piecewise_multipliers.size() != piecewise_breakpoints.size() + 1) {
        throw ConfigError("piecewise needs one more multiplier than breakpoints");
      }
      double prev = 0.0;
      for (double b : piecewise_breakpoints) {
        if (!(b > prev && b < 1.0)) {
          throw ConfigError("piecewise breakpoints must increase within (0, 1)");
        }
        prev = b;
      }
      for (double m : piecewise_multipliers) {
        if (!(m >= 0.0)) throw ConfigError("piecewise multipliers must be >= 0");
      }
      break;
    }
    case ScheduleKind::sgdr:
      if (sgdr_period < 0) throw ConfigError("sgdr_period must be >= 0");
      if (!(sgdr_multiplier >= 1.0)) {
        throw ConfigError("sgdr_multiplier must be >= 1");
      }
      if (!(sgdr_floor_fraction >= 0.0 && sgdr_floor_fraction < 1.0)) {
        throw ConfigError("sgdr_floor_fraction must be in [0, 1)");
      }
      break;
    case ScheduleKind::warmup_cosine:
    case ScheduleKind::cosine_one_cycle: {
      const auto w = warmup_steps();
      if (w < 1 || w >= total_steps) {
        throw ConfigError("warm-up must cover at least one step and end before "
                          "total_steps");
      }
      if (!(warmup_start_fraction >= 0.0 && warmup_start_fraction < 1.0)) {
        throw ConfigError("warmup_start_fraction must be in [0, 1)");
      }
      if (!(end_fraction < 1.0)) {
        throw ConfigError("warm-up kinds need end_fraction < 1");
      }
      break;
    }
    default:
      break;
  }
}

double lr_at(const ScheduleSpec& spec, std::int64_t step) {
  if (step < 0 || step > spec.total_steps) {
    throw RangeError("step " + std::to_string(step) + " outside [0, " +
                     std::to_string(spec.total_steps) + "]");
  }
  const double a0 = spec.base_lr;
  const double end = spec.end_fraction * a0;
  const double p = static_cast<double>(step) / static_cast<double>(spec.total_steps);
  switch (spec.kind) {
    case ScheduleKind::constant:
      return a0;
    case ScheduleKind::linear:
      return end + (a0 - end) * (1.0 - p);
    case ScheduleKind::quadratic:
      return end + (a0 - end) * (1.0 - p) * (1.0 - p);
    case ScheduleKind::cosine:
      return cosine_decay(a0, end, p);
    case ScheduleKind::exponential:
      return a0 * std::pow(spec.exp_end_fraction, p);
    case ScheduleKind::piecewise: {
      std::size_t seg = 0;
      while (seg < spec.piecewise_breakpoints.size() &&
             p >= spec.piecewise_breakpoints[seg]) {
        ++seg;
      }
      return a0 * spec.piecewise_multipliers.at(seg);
    }
    case ScheduleKind::sgdr: {
      const double floor = spec.sgdr_floor_fraction * a0;
      double period = static_cast<double>(spec.first_period());
      double pos = static_cast<double>(step);
      while (pos >= period) {
        pos -= period;
        period *= spec.sgdr_multiplier;
      }
      return cosine_decay(a0, floor, pos / period);
    }
    case ScheduleKind::warmup_cosine:
    case ScheduleKind::cosine_one_cycle: {
      const double start = spec.warmup_start_fraction * a0;
      const std::int64_t w = spec.warmup_steps();
      if (step <= w) {
        const double q = static_cast<double>(step) / static_cast<double>(w);
        if (spec.kind == ScheduleKind::warmup_cosine) {
          return start + (a0 - start) * q;
        }
        return start + (a0 - start) * 0.5 * (1.0 - std::cos(std::numbers::pi * q));
      }
      const double q = static_cast<double>(step - w) /
                       static_cast<double>(spec.total_steps - w);
      return cosine_decay(a0, end, q);
    }
  }
  return a0;
}

std::vector<std::pair<std::int64_t, double>> schedule_table(
    const ScheduleSpec& spec, std::int64_t stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  std::vector<std::pair<std::int64_t, double>> table;
  for (std::int64_t t = 0; t < spec.total_steps; t += stride) {
    table.emplace_back(t, lr_at(spec, t));
  }
  table.emplace_back(spec.total_steps, lr_at(spec, spec.total_steps));
  return table;
}

std::string schedule_csv(const ScheduleSpec& spec, std::int64_t stride) {
  std::ostringstream out;
  out << "step,lr\n";
  for (const auto& [t, lr] : schedule_table(spec, stride)) {
    out << t << ',' << exact(lr) << '\n';
  }
  return out.str();
}

std::vector<std::int64_t> sgdr_restarts(const ScheduleSpec& spec) {
  std::vector<std::int64_t> out;
  double boundary = 0.0;
  double period = static_cast<double>(spec.first_period());
  while (true) {
    boundary += period;
    period *= spec.sgdr_multiplier;
    const auto b = static_cast<std::int64_t>(std::ceil(boundary - 1e-9));
    if (b > spec.total_steps) break;
    out.push_back(b);
  }
  return out;
}

}  // namespace ganno::schedules
