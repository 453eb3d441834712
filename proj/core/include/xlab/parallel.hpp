#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace xlab {

// Runs fn(i) for i in [0, total) across up to n_threads threads. Each index
// is processed exactly once and workers write only to their own slots, so
// results are identical for any thread count. Contiguous chunking, remainder
// on the calling thread. The first exception (if any) is rethrown after all
// workers join.
template <typename Fn>
void parallel_for(int total, int n_threads, Fn&& fn) {
  if (n_threads < 1) n_threads = 1;
  if (n_threads > total) n_threads = total;
  if (n_threads <= 1) {
    for (int i = 0; i < total; ++i) fn(i);
    return;
  }
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto guarded = [&](int lo, int hi) {
    try {
      for (int i = lo; i < hi && !failed.load(std::memory_order_relaxed); ++i) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!failed.exchange(true)) error = std::current_exception();
    }
  };
  int chunk = total / n_threads;
  std::vector<std::thread> workers;
  workers.reserve(n_threads - 1);
  for (int t = 0; t < n_threads - 1; ++t) {
    int lo = t * chunk;
    workers.emplace_back(guarded, lo, lo + chunk);
  }
  guarded((n_threads - 1) * chunk, total);
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

inline int default_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (hw > 16) hw = 16;
  return static_cast<int>(hw);
}

}  // namespace xlab
