#pragma once

// Concurrent fully associative software cache over device lines.
//
// Lines map to slots through a bucketed hash table. A miss inserts a pending
// entry so later missers of the same line join it instead of fetching again;
// the inserting thread picks a victim with the clock hand, writes it back if
// dirty and fetches the line. Pinned slots (refcount > 0) are never victims.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "bamsim/backend.hpp"
#include "bamsim/common.hpp"
#include "bamsim/device_memory.hpp"

namespace bamsim {

struct CacheConfig {
  uint32_t line_size = 4096;
  uint64_t num_slots = 16384;
  // Full clock rotations over pinned slots before the evictor yields.
  uint32_t eviction_passes = 8;
  PollConfig poll;

  uint64_t capacity_bytes() const { return num_slots * line_size; }
  void validate() const;
};

enum class LineState : uint8_t { invalid = 0, busy = 1, valid = 2 };

struct CacheStats {
  uint64_t probes = 0;  // leader probes
  uint64_t hits = 0;
  uint64_t misses = 0;  // backing fetches
  uint64_t evictions = 0;
  uint64_t writebacks = 0;
  uint64_t flush_writes = 0;
  uint64_t releases = 0;
};

class Cache;

// One pin on a cache slot. Move-only; releases on destruction.
class LineRef {
 public:
  LineRef() = default;
  LineRef(LineRef&& o) noexcept : cache_(o.cache_), slot_(o.slot_), released_(o.released_) { o.cache_ = nullptr; }
  LineRef& operator=(LineRef&& o) noexcept;
  LineRef(const LineRef&) = delete;
  LineRef& operator=(const LineRef&) = delete;
  ~LineRef();

  bool valid() const { return cache_ != nullptr; }
  explicit operator bool() const { return valid(); }
  uint64_t slot() const { return slot_; }
  LineId line() const;
  uint32_t line_size() const;

  // Copies bytes out of / into the line; write sets the dirty bit.
  void read(uint32_t offset, std::span<std::byte> out) const;
  void write(uint32_t offset, std::span<const std::byte> in);

  template <typename T>
  T load(uint32_t offset) const {
    T v;
    read(offset, std::as_writable_bytes(std::span<T>(&v, 1)));
    return v;
  }
  template <typename T>
  void store(uint32_t offset, const T& v) {
    write(offset, std::as_bytes(std::span<const T>(&v, 1)));
  }

  // Drops the pin. A second call throws ProtocolError.
  void release();

 private:
  friend class Cache;
  LineRef(Cache* c, uint64_t slot) : cache_(c), slot_(slot) {}

  Cache* cache_ = nullptr;
  uint64_t slot_ = 0;
  bool released_ = false;
};

class Cache {
 public:
  Cache(CacheConfig config, DeviceMemory& memory, CacheBackend& backend);
  ~Cache();

  Cache(const Cache&) = delete;
  Cache& operator=(const Cache&) = delete;

  const CacheConfig& config() const { return config_; }
  uint32_t line_size() const { return config_.line_size; }
  uint64_t num_slots() const { return config_.num_slots; }

  // Pins `line`, fetching it on a miss. Throws IoError if the fetch fails.
  LineRef probe(const LineId& line);

  // Warp coalescing: members asking for the same line elect one leader that
  // probes once; every member still gets its own pin. refs[i] serves lines[i].
  std::vector<LineRef> probe_group(std::span<const LineId> lines);

  // Writes back dirty lines. Returns the number of write commands issued.
  uint64_t flush(const LineId& line);
  uint64_t flush_all();

  // Picks and claims a victim slot (state busy, unmapped). Exposed for tests;
  // the caller owns the slot and must hand it back with abandon_slot().
  uint64_t evict_victim();
  void abandon_slot(uint64_t slot);

  // Optional hook run after a victim is chosen, before it is remapped.
  void set_eviction_observer(std::function<void(uint64_t slot, const LineId& old_line, bool dirty)> fn) {
    on_evict_ = std::move(fn);
  }

  // Inspection.
  LineState state(uint64_t slot) const { return static_cast<LineState>(slots_[slot].state.load()); }
  uint32_t refcount(uint64_t slot) const { return slots_[slot].refcount.load(); }
  bool dirty(uint64_t slot) const { return slots_[slot].dirty.load(); }
  LineId slot_line(uint64_t slot) const { return slots_[slot].line(); }
  // Slot holding `line`, or -1.
  int64_t lookup(const LineId& line) const;
  uint64_t total_refcount() const;
  uint64_t clock_hand() const { return hand_.load(); }
  CacheStats stats() const;

 private:
  friend class LineRef;

  static constexpr uint64_t kPending = ~uint64_t{0};

  struct Slot {
    std::atomic<uint8_t> state{0};
    std::atomic<uint32_t> refcount{0};
    std::atomic<bool> dirty{false};
    // Written by the slot owner while busy; read racily by evictors, which
    // confirm under the bucket lock.
    std::atomic<uint32_t> device{0};
    std::atomic<uint64_t> lba{0};
    LineId line() const {
      return LineId{device.load(std::memory_order_relaxed), lba.load(std::memory_order_relaxed)};
    }
    void set_line(const LineId& l) {
      device.store(l.device, std::memory_order_relaxed);
      lba.store(l.lba, std::memory_order_relaxed);
    }
  };
  struct Entry {
    LineId line;
    uint64_t slot;
    uint32_t pending;  // pins waiting for a slot assignment
  };
  struct Bucket {
    mutable SpinLock lock;
    std::vector<Entry> entries;
    Entry* find(const LineId& l) {
      for (auto& e : entries) {
        if (e.line == l) return &e;
      }
      return nullptr;
    }
    void erase(const LineId& l);
  };

  Bucket& bucket_of(const LineId& l) const { return buckets_[LineIdHash{}(l) % buckets_.size()]; }
  uint64_t pin(const LineId& line, uint32_t count);
  void wait_valid(uint64_t slot, uint32_t count);
  void unpin(uint64_t slot);
  std::byte* slot_data(uint64_t slot) { return memory_.data(base_ + slot * config_.line_size); }
  uint64_t slot_offset(uint64_t slot) const { return base_ + slot * config_.line_size; }
  uint64_t flush_slot_pinned(uint64_t slot);

  const CacheConfig config_;
  DeviceMemory& memory_;
  CacheBackend& backend_;
  uint64_t base_;
  std::unique_ptr<Slot[]> slots_;
  mutable std::vector<Bucket> buckets_;
  std::atomic<uint64_t> hand_{0};
  std::function<void(uint64_t, const LineId&, bool)> on_evict_;

  std::atomic<uint64_t> probes_{0}, hits_{0}, misses_{0}, evictions_{0}, writebacks_{0},
      flush_writes_{0}, releases_{0};
};

}  // namespace bamsim
