#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>

namespace bamsim {

inline constexpr uint32_t kBlockSize = 512;
inline constexpr uint32_t kWarpWidth = 32;

// Base of every fault the simulator raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (CLI maps these to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A poll budget ran out: protocol bug or an unserviced device.
class TimeoutError : public Error {
 public:
  using Error::Error;
};

// Violation of a protocol rule: doorbell regression, double release, ...
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A device reported ERROR status for a command the caller depended on.
class IoError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

constexpr bool is_power_of_two(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr uint64_t next_power_of_two(uint64_t v) {
  uint64_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

struct PollConfig {
  // Busy iterations before each cooperative yield. Zero on single-core hosts.
  uint32_t spin_count = std::thread::hardware_concurrency() > 1 ? 64 : 0;
  std::chrono::nanoseconds timeout = std::chrono::seconds(30);
};

// Spin-then-yield wait helper. Throws TimeoutError once the budget is spent.
class Poller {
 public:
  explicit Poller(const PollConfig& cfg, const char* what = "poll")
      : cfg_(cfg), what_(what), deadline_(std::chrono::steady_clock::now() + cfg.timeout) {}

  void pause() {
    if (spins_ < cfg_.spin_count) {
      ++spins_;
      return;
    }
    spins_ = 0;
    std::this_thread::yield();
    if ((++yields_ & 63) == 0 && std::chrono::steady_clock::now() > deadline_) {
      throw TimeoutError(std::string(what_) + ": timed out after " +
                         std::to_string(std::chrono::duration<double>(cfg_.timeout).count()) + " s");
    }
  }

  // Progress was observed; restart the inactivity window.
  void reset() { deadline_ = std::chrono::steady_clock::now() + cfg_.timeout; }

 private:
  PollConfig cfg_;
  const char* what_;
  std::chrono::steady_clock::time_point deadline_;
  uint32_t spins_ = 0;
  uint64_t yields_ = 0;
};

class SpinLock {
 public:
  bool try_lock() noexcept { return !flag_.test_and_set(std::memory_order_acquire); }
  void lock() noexcept {
    while (!try_lock()) {
      while (flag_.test(std::memory_order_relaxed)) std::this_thread::yield();
    }
  }
  void unlock() noexcept { flag_.clear(std::memory_order_release); }

 private:
  std::atomic_flag flag_;
};

}  // namespace bamsim
