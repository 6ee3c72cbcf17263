#pragma once

// In-memory CacheBackend with a command log, optional fetch delay and
// failure injection.

#include <atomic>
#include <chrono>
#include <cstring>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "bamsim/backend.hpp"
#include "bamsim/device_memory.hpp"

namespace bamsim::testing {

inline uint64_t line_stamp(const LineId& l) { return (uint64_t{l.device} << 48) ^ (l.lba * 0x9e3779b97f4a7c15ull); }

class FakeBackend final : public CacheBackend {
 public:
  struct Op {
    bool write;
    LineId line;
  };

  explicit FakeBackend(DeviceMemory& mem) : mem_(mem) {}

  std::chrono::microseconds read_delay{0};
  std::atomic<uint64_t> fail_lba{~uint64_t{0}};

  Status read_line(const LineId& line, uint64_t off, uint32_t bytes) override {
    reads.fetch_add(1);
    record({false, line});
    if (read_delay.count() > 0) std::this_thread::sleep_for(read_delay);
    if (line.lba == fail_lba.load()) return Status::error;
    std::vector<std::byte> buf(bytes);
    {
      std::lock_guard<std::mutex> g(mu_);
      auto it = store_.find(key(line));
      if (it != store_.end()) {
        std::memcpy(buf.data(), it->second.data(), bytes);
      } else {
        const uint64_t w = line_stamp(line);
        for (uint32_t i = 0; i < bytes; i += 8) std::memcpy(buf.data() + i, &w, 8);
      }
    }
    mem_.dma_write(off, buf);
    return Status::ok;
  }

  Status write_line(const LineId& line, uint64_t off, uint32_t bytes) override {
    writes.fetch_add(1);
    record({true, line});
    std::vector<std::byte> buf(bytes);
    mem_.dma_read(off, buf);
    std::lock_guard<std::mutex> g(mu_);
    store_[key(line)] = std::move(buf);
    return Status::ok;
  }

  std::vector<Op> log() {
    std::lock_guard<std::mutex> g(mu_);
    return log_;
  }

  // First 8 bytes of the stored line (or its stamp when never written).
  uint64_t first_word(const LineId& line) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = store_.find(key(line));
    if (it == store_.end()) return line_stamp(line);
    uint64_t w;
    std::memcpy(&w, it->second.data(), 8);
    return w;
  }

  std::atomic<uint64_t> reads{0};
  std::atomic<uint64_t> writes{0};

 private:
  static std::pair<uint32_t, uint64_t> key(const LineId& l) { return {l.device, l.lba}; }
  void record(Op op) {
    std::lock_guard<std::mutex> g(mu_);
    log_.push_back(op);
  }

  DeviceMemory& mem_;
  std::mutex mu_;
  std::map<std::pair<uint32_t, uint64_t>, std::vector<std::byte>> store_;
  std::vector<Op> log_;
};

}  // namespace bamsim::testing
