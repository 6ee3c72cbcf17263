#include "bamsim/cache.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <string>

namespace bamsim {

void CacheConfig::validate() const {
  if (!is_power_of_two(line_size) || line_size < kBlockSize) {
    throw ConfigError("cache line size must be a power of two >= " + std::to_string(kBlockSize));
  }
  if (num_slots == 0) throw ConfigError("cache needs at least one slot");
  if (eviction_passes == 0) throw ConfigError("eviction passes must be positive");
}

// ---- LineRef ----------------------------------------------------------------

LineRef& LineRef::operator=(LineRef&& o) noexcept {
  if (this != &o) {
    if (cache_ && !released_) cache_->unpin(slot_);
    cache_ = o.cache_;
    slot_ = o.slot_;
    released_ = o.released_;
    o.cache_ = nullptr;
  }
  return *this;
}

LineRef::~LineRef() {
  if (cache_ && !released_) {
    try {
      cache_->unpin(slot_);
    } catch (...) {
    }
  }
}

LineId LineRef::line() const { return cache_->slot_line(slot_); }

uint32_t LineRef::line_size() const { return cache_->line_size(); }

void LineRef::read(uint32_t offset, std::span<std::byte> out) const {
  if (!cache_ || released_) throw ProtocolError("read through a released line reference");
  if (uint64_t{offset} + out.size() > cache_->line_size()) throw RangeError("line read out of range");
  std::memcpy(out.data(), cache_->slot_data(slot_) + offset, out.size());
}

void LineRef::write(uint32_t offset, std::span<const std::byte> in) {
  if (!cache_ || released_) throw ProtocolError("write through a released line reference");
  if (uint64_t{offset} + in.size() > cache_->line_size()) throw RangeError("line write out of range");
  std::memcpy(cache_->slot_data(slot_) + offset, in.data(), in.size());
  cache_->slots_[slot_].dirty.store(true, std::memory_order_release);
}

void LineRef::release() {
  if (!cache_ || released_) throw ProtocolError("line reference released twice");
  released_ = true;
  cache_->unpin(slot_);
}

// ---- Cache ------------------------------------------------------------------

void Cache::Bucket::erase(const LineId& l) {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].line == l) {
      entries[i] = entries.back();
      entries.pop_back();
      return;
    }
  }
}

Cache::Cache(CacheConfig config, DeviceMemory& memory, CacheBackend& backend)
    : config_((config.validate(), config)),
      memory_(memory),
      backend_(backend),
      base_(memory.allocate(config.num_slots * config.line_size)),
      slots_(new Slot[config.num_slots]),
      buckets_(config.num_slots * 2) {}

Cache::~Cache() = default;

int64_t Cache::lookup(const LineId& line) const {
  Bucket& b = bucket_of(line);
  std::lock_guard<SpinLock> guard(b.lock);
  const Entry* e = b.find(line);
  if (!e || e->slot == kPending) return -1;
  return static_cast<int64_t>(e->slot);
}

void Cache::wait_valid(uint64_t slot, uint32_t /*count*/) {
  Poller poller(config_.poll, "cache line fetch");
  for (;;) {
    const auto st = static_cast<LineState>(slots_[slot].state.load(std::memory_order_acquire));
    if (st == LineState::valid) return;
    if (st == LineState::invalid) throw IoError("cache line fetch failed");
    poller.pause();
  }
}

uint64_t Cache::pin(const LineId& line, uint32_t count) {
  probes_.fetch_add(1, std::memory_order_relaxed);
  Bucket& b = bucket_of(line);
  b.lock.lock();
  Entry* e = b.find(line);
  if (e && e->slot != kPending) {
    const uint64_t s = e->slot;
    slots_[s].refcount.fetch_add(count, std::memory_order_acq_rel);
    b.lock.unlock();
    hits_.fetch_add(1, std::memory_order_relaxed);
    wait_valid(s, count);
    return s;
  }
  if (e) {
    // Someone is already choosing a slot for this line; join them.
    e->pending += count;
    b.lock.unlock();
    hits_.fetch_add(1, std::memory_order_relaxed);
    Poller poller(config_.poll, "cache miss join");
    uint64_t s = kPending;
    while (s == kPending) {
      poller.pause();
      std::lock_guard<SpinLock> guard(b.lock);
      const Entry* cur = b.find(line);
      if (!cur) throw IoError("cache line fetch failed");
      s = cur->slot;
    }
    wait_valid(s, count);
    return s;
  }
  b.entries.push_back({line, kPending, count});
  b.lock.unlock();
  misses_.fetch_add(1, std::memory_order_relaxed);

  uint64_t s;
  try {
    s = evict_victim();
  } catch (...) {
    std::lock_guard<SpinLock> guard(b.lock);
    b.erase(line);
    throw;
  }
  Slot& sl = slots_[s];
  sl.set_line(line);
  sl.dirty.store(false, std::memory_order_relaxed);
  {
    std::lock_guard<SpinLock> guard(b.lock);
    Entry* cur = b.find(line);
    sl.refcount.store(cur->pending, std::memory_order_release);
    cur->slot = s;
  }

  Status st;
  try {
    st = backend_.read_line(line, slot_offset(s), config_.line_size);
  } catch (...) {
    st = Status::error;
  }
  if (st != Status::ok) {
    {
      std::lock_guard<SpinLock> guard(b.lock);
      b.erase(line);
    }
    sl.refcount.store(0, std::memory_order_release);
    sl.state.store(static_cast<uint8_t>(LineState::invalid), std::memory_order_release);
    throw IoError("cache line fetch failed (device " + std::to_string(line.device) + " lba " +
                  std::to_string(line.lba) + ")");
  }
  sl.state.store(static_cast<uint8_t>(LineState::valid), std::memory_order_release);
  return s;
}

void Cache::unpin(uint64_t slot) {
  const uint32_t old = slots_[slot].refcount.fetch_sub(1, std::memory_order_acq_rel);
  if (old == 0) {
    slots_[slot].refcount.fetch_add(1, std::memory_order_relaxed);
    throw ProtocolError("refcount underflow on slot " + std::to_string(slot));
  }
  releases_.fetch_add(1, std::memory_order_relaxed);
}

LineRef Cache::probe(const LineId& line) { return LineRef(this, pin(line, 1)); }

std::vector<LineRef> Cache::probe_group(std::span<const LineId> lines) {
  std::vector<LineRef> refs(lines.size());
  std::vector<bool> done(lines.size(), false);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (done[i]) continue;
    // i leads every later member asking for the same line.
    uint32_t count = 0;
    for (size_t j = i; j < lines.size(); ++j) count += lines[j] == lines[i];
    const uint64_t s = pin(lines[i], count);
    for (size_t j = i; j < lines.size(); ++j) {
      if (lines[j] == lines[i]) {
        refs[j] = LineRef(this, s);
        done[j] = true;
      }
    }
  }
  return refs;
}

uint64_t Cache::evict_victim() {
  const uint64_t limit = config_.num_slots * config_.eviction_passes;
  PollConfig yield_cfg = config_.poll;
  yield_cfg.spin_count = 0;
  Poller poller(yield_cfg, "cache eviction (all lines pinned)");
  uint64_t examined = 0;
  for (;;) {
    const uint64_t s = hand_.fetch_add(1, std::memory_order_acq_rel) % config_.num_slots;
    Slot& sl = slots_[s];
    const auto st = static_cast<LineState>(sl.state.load(std::memory_order_acquire));
    if (st == LineState::invalid) {
      uint8_t expected = static_cast<uint8_t>(LineState::invalid);
      if (sl.state.compare_exchange_strong(expected, static_cast<uint8_t>(LineState::busy))) return s;
    } else if (st == LineState::valid && sl.refcount.load(std::memory_order_acquire) == 0) {
      // The line field may be mid-update; the bucket check below rejects it then.
      const LineId old = sl.line();
      Bucket& b = bucket_of(old);
      std::unique_lock<SpinLock> guard(b.lock);
      Entry* e = b.find(old);
      uint8_t expected = static_cast<uint8_t>(LineState::valid);
      if (e && e->slot == s && sl.refcount.load(std::memory_order_acquire) == 0 &&
          sl.state.compare_exchange_strong(expected, static_cast<uint8_t>(LineState::busy))) {
        const bool was_dirty = sl.dirty.exchange(false, std::memory_order_acq_rel);
        bool evicted = true;
        if (was_dirty) {
          // Keep the mapping while writing back: new pinners wait on busy.
          guard.unlock();
          Status ws;
          try {
            ws = backend_.write_line(old, slot_offset(s), config_.line_size);
          } catch (...) {
            ws = Status::error;
          }
          writebacks_.fetch_add(1, std::memory_order_relaxed);
          guard.lock();
          if (ws != Status::ok) {
            sl.dirty.store(true, std::memory_order_relaxed);
            sl.state.store(static_cast<uint8_t>(LineState::valid), std::memory_order_release);
            throw IoError("write-back failed for device " + std::to_string(old.device) + " lba " +
                          std::to_string(old.lba));
          }
          if (sl.refcount.load(std::memory_order_acquire) != 0) {
            sl.state.store(static_cast<uint8_t>(LineState::valid), std::memory_order_release);
            evicted = false;
          }
        }
        if (evicted) {
          b.erase(old);
          guard.unlock();
          evictions_.fetch_add(1, std::memory_order_relaxed);
          if (on_evict_) on_evict_(s, old, was_dirty);
          return s;
        }
      }
    }
    if (++examined >= limit) {
      examined = 0;
      poller.pause();
    }
  }
}

void Cache::abandon_slot(uint64_t slot) {
  slots_[slot].refcount.store(0, std::memory_order_relaxed);
  slots_[slot].dirty.store(false, std::memory_order_relaxed);
  slots_[slot].state.store(static_cast<uint8_t>(LineState::invalid), std::memory_order_release);
}

uint64_t Cache::flush_slot_pinned(uint64_t slot) {
  wait_valid(slot, 1);
  Slot& sl = slots_[slot];
  if (!sl.dirty.exchange(false, std::memory_order_acq_rel)) return 0;
  const LineId line = sl.line();
  const Status st = backend_.write_line(line, slot_offset(slot), config_.line_size);
  if (st != Status::ok) {
    sl.dirty.store(true, std::memory_order_relaxed);
    throw IoError("flush failed for device " + std::to_string(line.device) + " lba " +
                  std::to_string(line.lba));
  }
  flush_writes_.fetch_add(1, std::memory_order_relaxed);
  return 1;
}

uint64_t Cache::flush(const LineId& line) {
  Bucket& b = bucket_of(line);
  uint64_t s;
  {
    std::lock_guard<SpinLock> guard(b.lock);
    const Entry* e = b.find(line);
    if (!e || e->slot == kPending || !slots_[e->slot].dirty.load()) return 0;
    s = e->slot;
    slots_[s].refcount.fetch_add(1, std::memory_order_acq_rel);
  }
  LineRef pin(this, s);
  return flush_slot_pinned(s);
}

uint64_t Cache::flush_all() {
  uint64_t writes = 0;
  std::vector<uint64_t> todo;
  for (Bucket& b : buckets_) {
    todo.clear();
    {
      std::lock_guard<SpinLock> guard(b.lock);
      for (const Entry& e : b.entries) {
        if (e.slot != kPending && slots_[e.slot].dirty.load(std::memory_order_acquire)) {
          slots_[e.slot].refcount.fetch_add(1, std::memory_order_acq_rel);
          todo.push_back(e.slot);
        }
      }
    }
    for (size_t i = 0; i < todo.size(); ++i) {
      LineRef pin(this, todo[i]);
      try {
        writes += flush_slot_pinned(todo[i]);
      } catch (...) {
        for (size_t j = i + 1; j < todo.size(); ++j) unpin(todo[j]);
        throw;
      }
    }
  }
  return writes;
}

uint64_t Cache::total_refcount() const {
  uint64_t sum = 0;
  for (uint64_t s = 0; s < config_.num_slots; ++s) sum += slots_[s].refcount.load();
  return sum;
}

CacheStats Cache::stats() const {
  return CacheStats{probes_.load(), hits_.load(), misses_.load(), evictions_.load(),
                    writebacks_.load(), flush_writes_.load(), releases_.load()};
}

}  // namespace bamsim
