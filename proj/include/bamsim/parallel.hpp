#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bamsim {

// Runs fn(i, worker) for i in [0, n) on up to `workers` threads, handing out
// indices dynamically. The first exception stops the run and is rethrown.
template <typename Fn>
void parallel_for(uint32_t workers, uint64_t n, Fn&& fn) {
  if (n == 0) return;
  workers = static_cast<uint32_t>(std::min<uint64_t>(std::max<uint32_t>(workers, 1), n));
  if (workers == 1) {
    for (uint64_t i = 0; i < n; ++i) fn(i, 0u);
    return;
  }
  std::atomic<uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (uint32_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        while (!failed.load(std::memory_order_relaxed)) {
          const uint64_t i = next.fetch_add(1, std::memory_order_relaxed);
          if (i >= n) break;
          try {
            fn(i, w);
          } catch (...) {
            std::lock_guard<std::mutex> g(error_mutex);
            if (!error) error = std::current_exception();
            failed.store(true);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace bamsim
