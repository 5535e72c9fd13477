#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace memsel {

inline int default_worker_count() {
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Runs fn(i) for i in [0, n). Work items must write only to their own slot;
// results are then independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(workers) < n ? workers : static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (int w = 0; w < count; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace memsel
