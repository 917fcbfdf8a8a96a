#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace irregular_sde {

inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over a static partition of [0, total).
// Results must be written to per-index slots so that the worker count can
// never influence the output; reductions are done afterwards in index order.
template <class Fn>
void parallel_blocks(std::int64_t total, int workers, Fn&& fn) {
  workers = resolve_workers(workers);
  if (total <= 0) return;
  const std::int64_t nblocks = std::min<std::int64_t>(workers, total);
  if (nblocks <= 1) {
    fn(std::int64_t{0}, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nblocks));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::int64_t chunk = (total + nblocks - 1) / nblocks;
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::int64_t begin = b * chunk;
    const std::int64_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace irregular_sde
