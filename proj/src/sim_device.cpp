#include "bamsim/sim_device.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace bamsim {

namespace {

using Clock = std::chrono::steady_clock;

Clock::duration micros(double us) {
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double, std::micro>(us));
}

}  // namespace

SimDevice::SimDevice(uint32_t id, DeviceProfile profile, DeviceOptions options, DeviceMemory& memory)
    : id_(id), profile_(std::move(profile)), options_(options), memory_(memory) {
  profile_.validate();
  if (options_.capacity_blocks == 0) throw ConfigError("device capacity must be positive");
  if (options_.completion_batch == 0) throw ConfigError("completion batch must be positive");
  backing_.resize(options_.capacity_blocks * kBlockSize);
  bindings_.reserve(kMaxQueuePairs);
  if (profile_.visibility_delay_us > 0) {
    set_visibility_mode(VisibilityMode::relaxed, profile_.visibility_delay_us);
  }
}

SimDevice::~SimDevice() { shutdown(); }

QueuePair& SimDevice::attach_queue_pair(uint32_t qsize) {
  std::lock_guard<std::mutex> guard(attach_mutex_);
  if (shut_down_.load()) throw ProtocolError("device " + std::to_string(id_) + " is shut down");
  if (bindings_.size() >= kMaxQueuePairs) throw ConfigError("too many queue pairs on one device");
  auto b = std::make_unique<Binding>();
  b->qp = std::make_unique<QueuePair>(static_cast<uint32_t>(bindings_.size()), qsize, this, options_.poll);
  bindings_.push_back(std::move(b));
  binding_count_.store(static_cast<uint32_t>(bindings_.size()), std::memory_order_release);
  return *bindings_.back()->qp;
}

QueuePair& SimDevice::queue_pair(uint32_t index) {
  if (index >= queue_pair_count()) throw RangeError("queue pair index out of range");
  return *bindings_[index]->qp;
}

SimDevice::Binding& SimDevice::binding_of(const QueuePair& qp) {
  const uint32_t idx = qp.id();
  if (idx >= queue_pair_count() || bindings_[idx]->qp.get() != &qp) {
    throw ProtocolError("queue pair is not attached to device " + std::to_string(id_));
  }
  return *bindings_[idx];
}

void SimDevice::ring(QueuePair& qp, DoorbellKind kind, uint64_t value) {
  Binding& b = binding_of(qp);
  std::atomic<uint64_t>& db = kind == DoorbellKind::sq_tail ? b.sq_tail_db : b.cq_head_db;
  uint64_t old = db.load(std::memory_order_acquire);
  do {
    if (value <= old) {
      regressions_.fetch_add(1, std::memory_order_relaxed);
      throw ProtocolError("doorbell regression on device " + std::to_string(id_) + " queue " +
                          std::to_string(qp.id()) + ": " + std::to_string(old) + " -> " +
                          std::to_string(value));
    }
  } while (!db.compare_exchange_weak(old, value, std::memory_order_seq_cst));
  (kind == DoorbellKind::sq_tail ? sq_db_ : cq_db_).fetch_add(1, std::memory_order_relaxed);
  wake();
  if (options_.doorbell_write_yields) std::this_thread::yield();
}

void SimDevice::set_visibility_mode(VisibilityMode mode, double delay_us) {
  if (delay_us < 0) throw ConfigError("visibility delay must be non-negative");
  visibility_delay_us_.store(mode == VisibilityMode::relaxed ? delay_us : 0.0);
  visibility_.store(mode, std::memory_order_release);
}

template <typename Fn>
void SimDevice::with_block_locks(uint64_t lba, uint64_t count, Fn&& fn) const {
  // Stripes cover 8-block ranges; lock the touched ones in ascending order.
  const uint64_t first = lba / 8;
  const uint64_t last = (lba + count - 1) / 8;
  std::array<bool, 64> want{};
  for (uint64_t r = first; r <= last && r < first + 64; ++r) want[r % 64] = true;
  for (size_t i = 0; i < want.size(); ++i) {
    if (want[i]) stripes_[i].lock();
  }
  try {
    fn();
  } catch (...) {
    for (size_t i = 0; i < want.size(); ++i) {
      if (want[i]) stripes_[i].unlock();
    }
    throw;
  }
  for (size_t i = 0; i < want.size(); ++i) {
    if (want[i]) stripes_[i].unlock();
  }
}

void SimDevice::store_blocks(uint64_t lba, std::span<const std::byte> data) {
  const uint64_t count = (data.size() + kBlockSize - 1) / kBlockSize;
  if (count == 0) return;
  if (lba + count > options_.capacity_blocks) throw RangeError("store_blocks beyond device capacity");
  with_block_locks(lba, count, [&] { std::memcpy(backing_.data() + lba * kBlockSize, data.data(), data.size()); });
}

void SimDevice::load_blocks(uint64_t lba, std::span<std::byte> out) const {
  const uint64_t count = (out.size() + kBlockSize - 1) / kBlockSize;
  if (count == 0) return;
  if (lba + count > options_.capacity_blocks) throw RangeError("load_blocks beyond device capacity");
  with_block_locks(lba, count, [&] { std::memcpy(out.data(), backing_.data() + lba * kBlockSize, out.size()); });
}

Status SimDevice::execute(const IoCommand& cmd, uint32_t queue, Clock::time_point now) {
  Status status = Status::ok;
  const uint64_t bytes = uint64_t{cmd.block_count} * kBlockSize;
  if (cmd.block_count == 0 || cmd.lba >= options_.capacity_blocks ||
      cmd.block_count > options_.capacity_blocks - cmd.lba ||
      cmd.buffer_offset % 8 != 0 || cmd.buffer_offset > memory_.capacity() ||
      bytes > memory_.capacity() - cmd.buffer_offset) {
    status = Status::error;
  } else if (cmd.opcode == Opcode::read) {
    std::vector<std::byte> data(bytes);
    with_block_locks(cmd.lba, cmd.block_count,
                     [&] { std::memcpy(data.data(), backing_.data() + cmd.lba * kBlockSize, bytes); });
    if (visibility_.load(std::memory_order_acquire) == VisibilityMode::relaxed) {
      deferred_.push_back({now + micros(visibility_delay_us_.load()), cmd.buffer_offset, std::move(data)});
      deferred_count_.fetch_add(1, std::memory_order_relaxed);
    } else {
      memory_.dma_write(cmd.buffer_offset, data);
    }
    reads_.fetch_add(1, std::memory_order_relaxed);
    bytes_read_.fetch_add(bytes, std::memory_order_relaxed);
  } else {
    std::vector<std::byte> data(bytes);
    memory_.dma_read(cmd.buffer_offset, data);
    with_block_locks(cmd.lba, cmd.block_count,
                     [&] { std::memcpy(backing_.data() + cmd.lba * kBlockSize, data.data(), bytes); });
    writes_.fetch_add(1, std::memory_order_relaxed);
    bytes_written_.fetch_add(bytes, std::memory_order_relaxed);
  }
  if (status == Status::error) errors_.fetch_add(1, std::memory_order_relaxed);
  if (options_.record_command_log) {
    std::lock_guard<std::mutex> guard(log_mutex_);
    log_.push_back({id_, queue, cmd.opcode, cmd.lba, cmd.block_count, status});
  }
  return status;
}

bool SimDevice::post_completions(Binding& b) {
  bool posted = false;
  const uint32_t qsize = b.qp->size();
  uint32_t in_episode = 0;
  while (!b.outbound.empty() && in_episode < options_.completion_batch) {
    // The CQ has room while fewer than Q entries are unconsumed.
    if (b.cq_tail - b.cq_head_db.load(std::memory_order_acquire) >= qsize) break;
    const auto [cid, status] = b.outbound.front();
    b.outbound.pop_front();
    b.qp->controller_post(b.cq_tail, cid, status, b.fetched);
    ++b.cq_tail;
    ++in_episode;
    posted = true;
    posted_.fetch_add(1, std::memory_order_relaxed);
    in_service_.fetch_sub(1, std::memory_order_acq_rel);
  }
  return posted;
}

bool SimDevice::apply_deferred(Clock::time_point now, bool all) {
  bool applied = false;
  while (!deferred_.empty() && (all || deferred_.front().due <= now)) {
    memory_.dma_write(deferred_.front().offset, deferred_.front().bytes);
    deferred_.pop_front();
    applied = true;
  }
  return applied;
}

bool SimDevice::service_step() {
  const auto now = Clock::now();
  bool work = false;
  const uint32_t n = binding_count_.load(std::memory_order_acquire);

  // Fetch, round-robin across queue pairs, at most one batch per queue.
  for (uint32_t i = 0; i < n; ++i) {
    Binding& b = *bindings_[(rr_ + i) % n];
    const uint64_t tail = b.sq_tail_db.load(std::memory_order_acquire);
    const uint64_t take = std::min<uint64_t>(tail - b.fetched, options_.completion_batch);
    if (take == 0) continue;
    // Reading the submission queue orders every earlier posted data write.
    apply_deferred(now, true);
    for (uint64_t k = 0; k < take; ++k) {
      const IoCommand cmd = b.qp->controller_fetch(b.fetched);
      ++b.fetched;
      const double lat_us = (cmd.opcode == Opcode::read ? profile_.read_latency_us : profile_.write_latency_us) *
                            options_.stress_latency_scale;
      in_flight_.push_back({cmd, &b, now + micros(lat_us)});
      fetched_.fetch_add(1, std::memory_order_relaxed);
      in_service_.fetch_add(1, std::memory_order_acq_rel);
    }
    work = true;
  }
  if (n > 0) rr_ = (rr_ + 1) % n;

  // Execute every command whose service latency has elapsed, FIFO.
  for (auto it = in_flight_.begin(); it != in_flight_.end();) {
    if (it->ready <= now) {
      const Status status = execute(it->cmd, it->binding->qp->id(), now);
      it->binding->outbound.emplace_back(it->cmd.cid, status);
      it = in_flight_.erase(it);
      work = true;
    } else {
      ++it;
    }
  }

  for (uint32_t i = 0; i < n; ++i) {
    if (!bindings_[i]->outbound.empty()) work |= post_completions(*bindings_[i]);
  }
  work |= apply_deferred(Clock::now(), false);
  return work;
}

bool SimDevice::has_pending_work() const {
  const uint32_t n = binding_count_.load(std::memory_order_acquire);
  for (uint32_t i = 0; i < n; ++i) {
    const Binding& b = *bindings_[i];
    if (b.sq_tail_db.load(std::memory_order_seq_cst) > b.fetched) return true;
    if (!b.outbound.empty()) return true;
  }
  return false;
}

void SimDevice::service_loop(std::stop_token stop) {
  uint32_t idle = 0;
  while (!stop.stop_requested()) {
    if (service_step()) {
      idle = 0;
      continue;
    }
    if (++idle < 64) {
      std::this_thread::yield();
      continue;
    }
    // Sleep until a doorbell, the next service deadline, or a short timeout.
    auto wait = std::chrono::microseconds(500);
    const auto now = Clock::now();
    if (!in_flight_.empty()) {
      auto earliest = in_flight_.front().ready;
      for (const auto& f : in_flight_) earliest = std::min(earliest, f.ready);
      wait = std::min(wait, std::chrono::duration_cast<std::chrono::microseconds>(earliest - now));
    }
    if (!deferred_.empty()) {
      wait = std::min(wait, std::chrono::duration_cast<std::chrono::microseconds>(deferred_.front().due - now));
    }
    if (wait <= std::chrono::microseconds(0)) continue;
    std::unique_lock<std::mutex> lock(sleep_mutex_);
    sleeping_.store(true, std::memory_order_seq_cst);
    if (!has_pending_work() && !stop.stop_requested()) sleep_cv_.wait_for(lock, wait);
    sleeping_.store(false, std::memory_order_relaxed);
  }
}

void SimDevice::wake() {
  if (sleeping_.load(std::memory_order_seq_cst)) {
    std::lock_guard<std::mutex> lock(sleep_mutex_);
    sleep_cv_.notify_one();
  }
}

void SimDevice::start() {
  if (shut_down_.load()) throw ProtocolError("device " + std::to_string(id_) + " is shut down");
  if (thread_.joinable()) return;
  thread_ = std::jthread([this](std::stop_token st) { service_loop(st); });
}

void SimDevice::shutdown() {
  shut_down_.store(true);
  if (thread_.joinable()) {
    thread_.request_stop();
    {
      std::lock_guard<std::mutex> lock(sleep_mutex_);
      sleep_cv_.notify_all();
    }
    thread_.join();
  }
}

DeviceStats SimDevice::stats() const {
  return DeviceStats{fetched_.load(),       posted_.load(),        reads_.load(),
                     writes_.load(),        bytes_read_.load(),    bytes_written_.load(),
                     errors_.load(),        sq_db_.load(),         cq_db_.load(),
                     regressions_.load(),   deferred_count_.load()};
}

std::vector<DeviceCommandRecord> SimDevice::command_log() const {
  std::lock_guard<std::mutex> guard(log_mutex_);
  return log_;
}

void SimDevice::clear_command_log() {
  std::lock_guard<std::mutex> guard(log_mutex_);
  log_.clear();
}

}  // namespace bamsim
