#pragma once

#include <cstdint>
#include <functional>

#include "bamsim/queue_pair.hpp"

namespace bamsim {

// A backing line: device index plus the lba of its first block.
struct LineId {
  uint32_t device = 0;
  uint64_t lba = 0;

  bool operator==(const LineId&) const = default;
};

struct LineIdHash {
  size_t operator()(const LineId& l) const {
    uint64_t x = l.lba * 0x9E3779B97F4A7C15ull ^ (uint64_t{l.device} << 48);
    x ^= x >> 29;
    return static_cast<size_t>(x * 0xBF58476D1CE4E5B9ull);
  }
};

// What the cache needs from the storage stack.
class CacheBackend {
 public:
  virtual ~CacheBackend() = default;
  virtual Status read_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) = 0;
  virtual Status write_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) = 0;
};

}  // namespace bamsim
