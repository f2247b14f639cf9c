#include "ganno/env/actions.hpp"

#include <algorithm>
#include <string>

#include "ganno/errors.hpp"

namespace ganno::env {

double apply_action(double lr, int id, double lr_max) {
  if (id < 0 || id >= kNumActions) {
    throw ContractViolation("invalid action index " + std::to_string(id));
  }
  if (id == kNoOp) return lr;
  const Action& a = kActions[static_cast<std::size_t>(id)];
  double next = lr;
  switch (a.op) {
    case Op::add: next = lr + a.value; break;
    case Op::mul: next = lr * a.value; break;
    case Op::div: next = lr / a.value; break;
  }
  return std::clamp(next, 0.0, lr_max);
}

}  // namespace ganno::env
