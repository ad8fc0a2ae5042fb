#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rbfpca {

// Run body(i) for i in [0, n). With threads > 1 the indices are handed out by
// an atomic counter; bodies must touch only their own slots, so results are
// independent of scheduling. The first exception thrown by any body is
// rethrown on the calling thread after all workers finish.
template <class F>
void parallel_for(long n, int threads, F&& body) {
  const long t = std::max<long>(1, std::min<long>(threads, n));
  if (t == 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const long i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(size_t(t));
  for (long k = 0; k < t; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rbfpca
