#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace tlvc {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited
/// exactly once; callers write to disjoint slots, so results do not depend on jobs.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2 * static_cast<std::size_t>(jobs)) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunk = (n + jobs - 1) / jobs;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned t = 0; t < jobs; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace tlvc
