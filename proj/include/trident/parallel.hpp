#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace trident {

/// Worker count plus the deterministic switch. Every parallel loop in the
/// engine writes disjoint outputs, so results do not depend on the worker
/// count; deterministic mode additionally serializes execution.
struct ExecutionPolicy {
  unsigned workers = 1;
  bool deterministic = false;

  unsigned effective_workers() const { return deterministic ? 1u : std::max(1u, workers); }
};

/// Runs fn(begin, end) over contiguous chunks of [0, n). Exceptions thrown by
/// any chunk are rethrown on the calling thread (the first one wins).
template <typename Fn>
void parallel_for(std::ptrdiff_t n, const ExecutionPolicy& policy, Fn&& fn) {
  if (n <= 0) return;
  const auto workers = static_cast<std::ptrdiff_t>(
      std::min<std::ptrdiff_t>(policy.effective_workers(), n));
  if (workers <= 1) {
    fn(std::ptrdiff_t{0}, n);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t begin = w * chunk;
    const std::ptrdiff_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace trident
