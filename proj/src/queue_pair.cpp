#include "bamsim/queue_pair.hpp"

#include <mutex>
#include <string>

namespace bamsim {

namespace {

constexpr uint64_t kVirtualSpan = uint64_t{1} << 31;

uint64_t pack_cqe(uint32_t cid, Status status, uint8_t phase) {
  return (uint64_t{cid} << 32) | (uint64_t{static_cast<uint8_t>(status)} << 8) | phase;
}

}  // namespace

QueuePair::QueuePair(uint32_t id, uint32_t qsize, DoorbellSink* sink, PollConfig poll,
                     uint32_t initial_ticket)
    : id_(id),
      qsize_(qsize),
      turn_mask_(static_cast<uint32_t>((uint64_t{1} << 32) / (qsize ? qsize : 1) - 1)),
      sink_(sink),
      poll_(poll),
      turn_counter_(qsize),
      sq_mark_(qsize),
      cq_mark_(qsize),
      ticket_(initial_ticket) {
  if (!is_power_of_two(qsize) || qsize < kMinQueueSize || qsize > kMaxQueueSize) {
    throw ConfigError("queue size must be a power of two in [2, 65536], got " +
                      std::to_string(qsize));
  }
  const uint64_t start = initial_ticket / 2;
  if (initial_ticket % 2 != 0 || start % qsize != 0) {
    throw ConfigError("initial ticket must start a queue round");
  }
  sq_ = std::make_unique<SqSlot[]>(qsize);
  cq_ = std::make_unique<CqSlot[]>(qsize);
  const uint32_t start_turn = static_cast<uint32_t>(2 * (start / qsize));
  for (uint32_t e = 0; e < qsize; ++e) {
    turn_counter_[e].store(start_turn, std::memory_order_relaxed);
    sq_[e].stamp.store(static_cast<uint32_t>((start + kVirtualSpan - qsize + e) % kVirtualSpan),
                       std::memory_order_relaxed);
  }
  sq_tail_.store(start, std::memory_order_relaxed);
  sq_head_.store(start, std::memory_order_relaxed);
}

Ticket QueuePair::acquire_slot() {
  const uint32_t raw = ticket_.fetch_add(2, std::memory_order_acq_rel);
  return Ticket::from_raw(raw, qsize_);
}

bool QueuePair::turn_ready(uint32_t slot, uint32_t turn) const {
  const uint32_t counter = turn_counter_[slot].load(std::memory_order_acquire);
  return ((counter - 2 * turn) & turn_mask_) == 0;
}

SubmittedHandle QueuePair::enqueue_command(const Ticket& t, IoCommand cmd) {
  Poller poller(poll_, "enqueue_command");
  while (!turn_ready(t.slot, t.turn)) poller.pause();

  cmd.cid = t.virtual_index();
  SqSlot& slot = sq_[t.slot];
  slot.cmd = cmd;
  slot.stamp.store(t.virtual_index(), std::memory_order_relaxed);
  sq_mark_.set(t.slot);
  move_tail(t.slot);
  turn_counter_[t.slot].fetch_add(1, std::memory_order_acq_rel);
  enqueued_.fetch_add(1, std::memory_order_relaxed);
  return SubmittedHandle{cmd.cid, t};
}

void QueuePair::move_tail(uint32_t my_slot) {
  Poller poller(poll_, "move_tail");
  while (sq_mark_.test(my_slot)) {
    if (sq_lock_.try_lock()) {
      std::lock_guard<SpinLock> guard(sq_lock_, std::adopt_lock);
      const uint64_t tail = sq_tail_.load(std::memory_order_relaxed);
      const uint32_t count = reset_marks(tail, QueueKind::sq);
      if (count > 0) {
        sq_tail_.store(tail + count, std::memory_order_release);
        sq_rings_.fetch_add(1, std::memory_order_relaxed);
        ring(DoorbellKind::sq_tail, tail + count);
      }
    }
    if (!sq_mark_.test(my_slot)) break;
    poller.pause();
  }
}

uint32_t QueuePair::reset_marks(uint64_t from, QueueKind kind) {
  MarkBits& marks = kind == QueueKind::sq ? sq_mark_ : cq_mark_;
  uint32_t count = 0;
  while (true) {
    const uint64_t pos = from + count;
    if (kind == QueueKind::sq) {
      if (pos == sq_head_.load(std::memory_order_acquire) + qsize_) break;
    } else if (count == qsize_) {
      break;
    }
    if (!marks.test_and_clear(static_cast<uint32_t>(pos % qsize_))) break;
    ++count;
  }
  return count;
}

CompletionEntry QueuePair::poll_completion(const SubmittedHandle& h) {
  Poller poller(poll_, "poll_completion");
  uint64_t found = 0;
  bool have = false;
  while (!have) {
    const uint64_t head = cq_head_.load(std::memory_order_acquire);
    for (uint64_t pos = head; pos < head + qsize_; ++pos) {
      const uint64_t word = cq_[pos % qsize_].word.load(std::memory_order_acquire);
      if (static_cast<uint8_t>(word & 0xff) != phase_for(pos, qsize_)) break;
      if (static_cast<uint32_t>(word >> 32) == h.cid) {
        found = pos;
        have = true;
        break;
      }
    }
    if (!have) poller.pause();
  }

  const uint32_t slot = static_cast<uint32_t>(found % qsize_);
  const uint64_t word = cq_[slot].word.load(std::memory_order_acquire);
  CompletionEntry entry{h.cid, static_cast<Status>((word >> 8) & 0xff),
                        cq_[slot].sq_head.load(std::memory_order_acquire),
                        static_cast<uint8_t>(word & 0xff)};

  cq_mark_.set(slot);
  poller.reset();
  // Early exit: once the head has passed our entry some other thread reset
  // our mark, even if the bit is set again by a later round.
  while (cq_head_.load(std::memory_order_acquire) <= found) {
    if (cq_lock_.try_lock()) {
      std::lock_guard<SpinLock> guard(cq_lock_, std::adopt_lock);
      advance_cq_head_locked();
    }
    if (cq_head_.load(std::memory_order_acquire) > found) break;
    poller.pause();
  }
  consumed_.fetch_add(1, std::memory_order_relaxed);
  return entry;
}

void QueuePair::advance_cq_head_locked() {
  const uint64_t head = cq_head_.load(std::memory_order_relaxed);
  const uint32_t count = reset_marks(head, QueueKind::cq);
  if (count == 0) return;
  const uint64_t last = head + count - 1;
  const uint64_t new_sq_head = cq_[last % qsize_].sq_head.load(std::memory_order_acquire);

  cq_head_.store(head + count, std::memory_order_release);
  cq_rings_.fetch_add(1, std::memory_order_relaxed);
  ring(DoorbellKind::cq_head, head + count);

  const uint64_t old_sq_head = sq_head_.load(std::memory_order_relaxed);
  if (new_sq_head > old_sq_head) {
    for (uint64_t v = old_sq_head; v < new_sq_head; ++v) {
      turn_counter_[v % qsize_].fetch_add(1, std::memory_order_acq_rel);
    }
    sq_head_.store(new_sq_head, std::memory_order_release);
  }
}

CompletionEntry QueuePair::submit_and_wait(const IoCommand& cmd) {
  const Ticket t = acquire_slot();
  const SubmittedHandle h = enqueue_command(t, cmd);
  return poll_completion(h);
}

IoCommand QueuePair::controller_fetch(uint64_t pos) {
  const SqSlot& slot = sq_[pos % qsize_];
  if (slot.stamp.load(std::memory_order_acquire) != pos % kVirtualSpan) {
    stamp_violations_.fetch_add(1, std::memory_order_relaxed);
  }
  return slot.cmd;
}

void QueuePair::controller_post(uint64_t pos, uint32_t cid, Status status, uint64_t sq_head) {
  CqSlot& slot = cq_[pos % qsize_];
  slot.sq_head.store(sq_head, std::memory_order_relaxed);
  slot.word.store(pack_cqe(cid, status, phase_for(pos, qsize_)), std::memory_order_release);
}

void QueuePair::ring(DoorbellKind kind, uint64_t value) {
  if (sink_ != nullptr) sink_->ring(*this, kind, value);
}

bool QueuePair::mark(QueueKind kind, uint32_t slot) const {
  return kind == QueueKind::sq ? sq_mark_.test(slot) : cq_mark_.test(slot);
}

void QueuePair::set_mark(QueueKind kind, uint32_t slot) {
  (kind == QueueKind::sq ? sq_mark_ : cq_mark_).set(slot);
}

CompletionEntry QueuePair::cq_entry(uint32_t slot) const {
  const uint64_t word = cq_[slot].word.load(std::memory_order_acquire);
  return CompletionEntry{static_cast<uint32_t>(word >> 32), static_cast<Status>((word >> 8) & 0xff),
                         cq_[slot].sq_head.load(std::memory_order_acquire),
                         static_cast<uint8_t>(word & 0xff)};
}

QueueStats QueuePair::stats() const {
  return QueueStats{sq_rings_.load(), cq_rings_.load(), enqueued_.load(), consumed_.load(),
                    stamp_violations_.load()};
}

}  // namespace bamsim
