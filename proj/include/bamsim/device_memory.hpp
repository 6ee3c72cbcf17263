#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>

#include "bamsim/common.hpp"

namespace bamsim {

// The simulated accelerator memory that devices DMA into and out of.
//
// Fixed capacity, bump-allocated. Device transfers go through 8-byte atomic
// word copies so that a reader racing a deferred (relaxed-visibility) DMA sees
// stale or fresh words, never undefined behaviour.
class DeviceMemory {
 public:
  explicit DeviceMemory(uint64_t capacity_bytes);

  uint64_t capacity() const { return capacity_; }
  uint64_t used() const { return next_.load(std::memory_order_relaxed); }

  // Returns the offset of a fresh zeroed region. Thread-safe.
  uint64_t allocate(uint64_t bytes, uint64_t align = kBlockSize);

  std::byte* data(uint64_t offset) { return base() + offset; }
  const std::byte* data(uint64_t offset) const { return base() + offset; }
  std::span<std::byte> span(uint64_t offset, uint64_t bytes);

  // Word-atomic transfers; offset and size must be 8-byte aligned.
  void dma_write(uint64_t offset, std::span<const std::byte> src);
  void dma_read(uint64_t offset, std::span<std::byte> dst) const;

 private:
  std::byte* base() const { return reinterpret_cast<std::byte*>(words_.get()); }
  void check(uint64_t offset, uint64_t bytes) const;

  uint64_t capacity_;
  std::unique_ptr<uint64_t[]> words_;
  std::atomic<uint64_t> next_{0};
};

}  // namespace bamsim
