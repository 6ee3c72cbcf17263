#include "bamsim/device_memory.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace bamsim {

DeviceMemory::DeviceMemory(uint64_t capacity_bytes)
    : capacity_((capacity_bytes + 7) & ~uint64_t{7}),
      words_(std::make_unique<uint64_t[]>(capacity_ / 8)) {}

uint64_t DeviceMemory::allocate(uint64_t bytes, uint64_t align) {
  if (align == 0 || !is_power_of_two(align)) throw ConfigError("allocation alignment must be a power of two");
  align = std::max<uint64_t>(align, 8);
  uint64_t cur = next_.load(std::memory_order_relaxed);
  while (true) {
    const uint64_t start = (cur + align - 1) & ~(align - 1);
    const uint64_t end = start + ((bytes + 7) & ~uint64_t{7});
    if (end > capacity_) {
      throw ConfigError("device memory exhausted: need " + std::to_string(end) + " bytes, capacity " +
                        std::to_string(capacity_));
    }
    if (next_.compare_exchange_weak(cur, end, std::memory_order_relaxed)) return start;
  }
}

void DeviceMemory::check(uint64_t offset, uint64_t bytes) const {
  if (offset > capacity_ || bytes > capacity_ - offset) {
    throw RangeError("device memory access [" + std::to_string(offset) + ", +" + std::to_string(bytes) +
                     ") out of range");
  }
}

std::span<std::byte> DeviceMemory::span(uint64_t offset, uint64_t bytes) {
  check(offset, bytes);
  return {base() + offset, bytes};
}

void DeviceMemory::dma_write(uint64_t offset, std::span<const std::byte> src) {
  check(offset, src.size());
  uint64_t* dst = words_.get() + offset / 8;
  for (size_t i = 0; i < src.size() / 8; ++i) {
    uint64_t w;
    std::memcpy(&w, src.data() + i * 8, 8);
    std::atomic_ref<uint64_t>(dst[i]).store(w, std::memory_order_relaxed);
  }
}

void DeviceMemory::dma_read(uint64_t offset, std::span<std::byte> dst) const {
  check(offset, dst.size());
  uint64_t* src = words_.get() + offset / 8;
  for (size_t i = 0; i < dst.size() / 8; ++i) {
    const uint64_t w = std::atomic_ref<uint64_t>(src[i]).load(std::memory_order_relaxed);
    std::memcpy(dst.data() + i * 8, &w, 8);
  }
}

}  // namespace bamsim
