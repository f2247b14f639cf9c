#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ganno::harness {

// Runs fn(0..n-1) on up to `workers` threads. Jobs are independent; each
// failure is captured at its index and the remaining jobs still run.
inline std::vector<std::exception_ptr> parallel_for(
    std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(workers < 1 ? 1 : workers);
  if (count == 1 || n <= 1) {
    work();
    return errors;
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < count && t < n; ++t) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  return errors;
}

}  // namespace ganno::harness
