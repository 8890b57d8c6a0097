#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace sfaguard {

/// Runs fn(i) for i in [0, n) across OpenMP threads. Each index must write
/// only to its own output slot. The exception thrown by the lowest failing
/// index is rethrown after the loop, so failures are reported the same way
/// regardless of thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Serial counterpart of parallel_for, used by reference paths and tests.
template <class Fn>
void serial_for(std::size_t n, Fn&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

int max_threads();

}  // namespace sfaguard
