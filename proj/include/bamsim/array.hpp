#pragma once

// Typed array view over device-resident data, accessed through the cache.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "bamsim/cache.hpp"
#include "bamsim/sim_device.hpp"

namespace bamsim {

struct Extent {
  uint32_t device = 0;
  uint64_t start_lba = 0;
  uint64_t block_count = 0;
};

struct ArraySpec {
  std::string name;
  uint32_t element_size = 8;
  uint64_t length = 0;
  std::vector<Extent> extents;
};

struct LineLocation {
  LineId line;
  uint64_t line_index = 0;  // position of the line within the array
  uint32_t offset = 0;      // byte offset of the element inside the line
};

// Index arithmetic for one spec at one line size. Elements never straddle
// lines or extents, so element_size must divide line_size and every extent
// must hold a whole number of lines.
class ArrayLayout {
 public:
  ArrayLayout(ArraySpec spec, uint32_t line_size);

  const ArraySpec& spec() const { return spec_; }
  uint32_t line_size() const { return line_size_; }
  uint64_t line_count() const { return lines_needed_; }
  uint32_t elements_per_line() const { return line_size_ / spec_.element_size; }

  // Throws RangeError when i >= length.
  LineLocation locate(uint64_t i) const;
  LineId line(uint64_t line_index) const;

 private:
  ArraySpec spec_;
  uint32_t line_size_;
  uint64_t lines_needed_;
  std::vector<uint64_t> first_line_;  // first array line held by each extent
  uint32_t blocks_per_line_;
};

inline LineLocation index_to_line(const ArraySpec& spec, uint32_t line_size, uint64_t i) {
  return ArrayLayout(spec, line_size).locate(i);
}

// Blocks needed for `length` elements padded to whole lines.
uint64_t array_blocks(uint32_t element_size, uint64_t length, uint32_t line_size);

// Single-extent spec at start_lba on one device.
ArraySpec contiguous_array(std::string name, uint32_t element_size, uint64_t length, uint32_t device,
                           uint64_t start_lba, uint32_t line_size);

// Host-side bulk transfers between a flat byte image and the backing stores.
void store_array(std::span<SimDevice* const> devices, const ArraySpec& spec, std::span<const std::byte> image);
void load_array(std::span<SimDevice* const> devices, const ArraySpec& spec, std::span<std::byte> image);

template <typename T>
class Array {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  Array(ArraySpec spec, Cache& cache) : layout_(check(std::move(spec)), cache.line_size()), cache_(cache) {}

  uint64_t size() const { return layout_.spec().length; }
  const ArrayLayout& layout() const { return layout_; }
  Cache& cache() { return cache_; }
  uint64_t probes() const { return probes_.load(std::memory_order_relaxed); }

  T read(uint64_t i) {
    const LineLocation loc = layout_.locate(i);
    probes_.fetch_add(1, std::memory_order_relaxed);
    LineRef ref = cache_.probe(loc.line);
    return ref.load<T>(loc.offset);
  }

  void write(uint64_t i, const T& v) {
    const LineLocation loc = layout_.locate(i);
    probes_.fetch_add(1, std::memory_order_relaxed);
    LineRef ref = cache_.probe(loc.line);
    ref.store<T>(loc.offset, v);
  }

  // Pinned line holding element i, for reuse across many element accesses.
  LineRef acquire(uint64_t i) {
    probes_.fetch_add(1, std::memory_order_relaxed);
    return cache_.probe(layout_.locate(i).line);
  }
  uint32_t offset_of(uint64_t i) const { return layout_.locate(i).offset; }

  // Coalesced gather: one probe per distinct line in each group of 32.
  void read_group(std::span<const uint64_t> idx, std::span<T> out) {
    if (out.size() < idx.size()) throw RangeError("read_group output too small");
    for (size_t base = 0; base < idx.size(); base += kWarpWidth) {
      const size_t n = std::min<size_t>(kWarpWidth, idx.size() - base);
      LineLocation locs[kWarpWidth];
      auto refs = pin_group(idx.subspan(base, n), locs);
      for (size_t k = 0; k < n; ++k) out[base + k] = refs[k].template load<T>(locs[k].offset);
    }
  }

  // Coalesced scatter. Within a group, the last write to an index wins.
  void write_group(std::span<const uint64_t> idx, std::span<const T> vals) {
    if (vals.size() < idx.size()) throw RangeError("write_group value span too small");
    for (size_t base = 0; base < idx.size(); base += kWarpWidth) {
      const size_t n = std::min<size_t>(kWarpWidth, idx.size() - base);
      LineLocation locs[kWarpWidth];
      auto refs = pin_group(idx.subspan(base, n), locs);
      for (size_t k = 0; k < n; ++k) refs[k].template store<T>(locs[k].offset, vals[base + k]);
    }
  }

 private:
  static ArraySpec check(ArraySpec s) {
    if (s.element_size != sizeof(T)) throw ConfigError("array '" + s.name + "': element size mismatch");
    return s;
  }

  std::vector<LineRef> pin_group(std::span<const uint64_t> idx, LineLocation* locs) {
    LineId lines[kWarpWidth];
    for (size_t k = 0; k < idx.size(); ++k) {
      locs[k] = layout_.locate(idx[k]);
      lines[k] = locs[k].line;
    }
    uint64_t distinct = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
      bool first = true;
      for (size_t j = 0; j < k && first; ++j) first = !(lines[j] == lines[k]);
      distinct += first;
    }
    probes_.fetch_add(distinct, std::memory_order_relaxed);
    return cache_.probe_group(std::span<const LineId>(lines, idx.size()));
  }

  ArrayLayout layout_;
  Cache& cache_;
  std::atomic<uint64_t> probes_{0};
};

}  // namespace bamsim
