#pragma once

#include <array>
#include <string_view>

namespace ganno::env {

// Discrete learning-rate modifications. Index 0 is the no-op.
enum class Op { add, mul, div };

struct Action {
  Op op;
  double value;
  std::string_view name;
};

inline constexpr int kNumActions = 9;
inline constexpr int kNoOp = 0;

inline constexpr std::array<Action, kNumActions> kActions = {{
    {Op::add, 0.0, "+0.00"},
    {Op::mul, 1.01, "x1.01"},
    {Op::mul, 1.10, "x1.10"},
    {Op::div, 1.01, "/1.01"},
    {Op::div, 1.10, "/1.10"},
    {Op::add, 0.0005, "+0.0005"},
    {Op::add, -0.0005, "-0.0005"},
    {Op::add, 0.001, "+0.001"},
    {Op::add, -0.001, "-0.001"},
}};

// alpha (+) x for action `id`, clamped to [0, lr_max]. The no-op returns
// `lr` unchanged. Throws ContractViolation for an index outside [0, 9).
double apply_action(double lr, int id, double lr_max);

}  // namespace ganno::env
