#pragma once

// Lock-minimal NVMe-style submission/completion queue pair.
//
// Any number of client threads share one QueuePair. Slots are handed out by an
// atomic ticket counter; per-slot turn counters order successive rounds through
// the same physical slot; mark bit-vectors let whichever thread wins the queue
// lock advance the SQ tail (or CQ head) past every ready entry and ring one
// doorbell for all of them.
//
// Positions named "virtual" are monotonic 64-bit indices; they are reduced
// modulo the queue size only when touching slot storage. Doorbell values are
// virtual as well, which makes regression checks trivial.

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "bamsim/common.hpp"

namespace bamsim {

enum class Opcode : uint8_t { read = 0, write = 1 };

enum class Status : uint8_t { ok = 0, error = 1 };

enum class QueueKind : uint8_t { sq, cq };

enum class DoorbellKind : uint8_t { sq_tail, cq_head };

struct IoCommand {
  Opcode opcode = Opcode::read;
  uint32_t cid = 0;
  uint64_t lba = 0;
  uint32_t block_count = 1;
  // Byte offset into the device-visible memory region.
  uint64_t buffer_offset = 0;
};

struct CompletionEntry {
  uint32_t cid = 0;
  Status status = Status::ok;
  uint64_t sq_head = 0;
  uint8_t phase = 0;
};

// raw = 2 * (turn * Q + slot), modulo 2^32.
struct Ticket {
  uint32_t raw = 0;
  uint32_t slot = 0;
  uint32_t turn = 0;

  static Ticket from_raw(uint32_t raw, uint32_t qsize) {
    const uint32_t virt = raw / 2;
    return Ticket{raw, virt % qsize, virt / qsize};
  }
  // Index into the 2^31-entry virtual queue; doubles as the command id.
  uint32_t virtual_index() const { return raw / 2; }
};

struct SubmittedHandle {
  uint32_t cid = 0;
  Ticket ticket;
};

class QueuePair;

// Receiver of doorbell writes (the controller side).
class DoorbellSink {
 public:
  virtual ~DoorbellSink() = default;
  virtual void ring(QueuePair& qp, DoorbellKind kind, uint64_t value) = 0;
};

struct QueueStats {
  uint64_t sq_doorbell_rings = 0;
  uint64_t cq_doorbell_rings = 0;
  uint64_t commands_enqueued = 0;
  uint64_t completions_consumed = 0;
  uint64_t slot_generation_violations = 0;
};

class QueuePair {
 public:
  static constexpr uint32_t kMinQueueSize = 2;
  static constexpr uint32_t kMaxQueueSize = 65536;

  // Throws ConfigError unless qsize is a power of two in [2, 65536].
  QueuePair(uint32_t id, uint32_t qsize, DoorbellSink* sink, PollConfig poll = {},
            uint32_t initial_ticket = 0);

  QueuePair(const QueuePair&) = delete;
  QueuePair& operator=(const QueuePair&) = delete;

  uint32_t id() const { return id_; }
  uint32_t size() const { return qsize_; }
  const PollConfig& poll_config() const { return poll_; }

  // ---- client side ----------------------------------------------------------

  Ticket acquire_slot();
  // Waits for the slot's turn, publishes cmd (cid is overwritten with the
  // ticket's virtual index) and returns once the SQ tail has passed it.
  SubmittedHandle enqueue_command(const Ticket& t, IoCommand cmd);
  // Finds the completion for h, consumes it and returns once the CQ head has
  // passed its entry. ERROR status is passed through.
  CompletionEntry poll_completion(const SubmittedHandle& h);
  CompletionEntry submit_and_wait(const IoCommand& cmd);

  // Loops until sq mark of my_slot is observed reset.
  void move_tail(uint32_t my_slot);
  // Caller must hold the lock for `kind`. Clears consecutive marks starting at
  // virtual position `from`; returns how many were cleared.
  uint32_t reset_marks(uint64_t from, QueueKind kind);

  // ---- controller side ------------------------------------------------------

  // Copies the command at virtual SQ position pos and checks its stamp.
  IoCommand controller_fetch(uint64_t pos);
  // Publishes a completion into virtual CQ position pos.
  void controller_post(uint64_t pos, uint32_t cid, Status status, uint64_t sq_head);

  static uint8_t phase_for(uint64_t pos, uint32_t qsize) {
    return static_cast<uint8_t>(((pos / qsize) & 1) ^ 1);
  }

  // ---- inspection / test hooks ----------------------------------------------

  uint64_t sq_tail() const { return sq_tail_.load(std::memory_order_acquire); }
  uint64_t sq_head() const { return sq_head_.load(std::memory_order_acquire); }
  uint64_t cq_head() const { return cq_head_.load(std::memory_order_acquire); }
  uint32_t ticket_counter() const { return ticket_.load(std::memory_order_acquire); }
  uint32_t turn_counter(uint32_t slot) const {
    return turn_counter_[slot].load(std::memory_order_acquire);
  }
  bool mark(QueueKind kind, uint32_t slot) const;
  void set_mark(QueueKind kind, uint32_t slot);
  SpinLock& lock(QueueKind kind) { return kind == QueueKind::sq ? sq_lock_ : cq_lock_; }
  // Raw SQ slot contents (no synchronization; quiescent inspection only).
  const IoCommand& sq_entry(uint32_t slot) const { return sq_[slot].cmd; }
  CompletionEntry cq_entry(uint32_t slot) const;
  QueueStats stats() const;

 private:
  struct SqSlot {
    IoCommand cmd;
    std::atomic<uint32_t> stamp{0};
  };
  struct CqSlot {
    // cid << 32 | status << 8 | phase
    std::atomic<uint64_t> word{0};
    std::atomic<uint64_t> sq_head{0};
  };

  class MarkBits {
   public:
    explicit MarkBits(uint32_t n) : words_((n + 63) / 64) {}
    void set(uint32_t i) {
      words_[i / 64].fetch_or(uint64_t{1} << (i % 64), std::memory_order_release);
    }
    bool test(uint32_t i) const {
      return (words_[i / 64].load(std::memory_order_acquire) >> (i % 64)) & 1;
    }
    bool test_and_clear(uint32_t i) {
      const uint64_t bit = uint64_t{1} << (i % 64);
      return (words_[i / 64].fetch_and(~bit, std::memory_order_acq_rel) & bit) != 0;
    }

   private:
    std::vector<std::atomic<uint64_t>> words_;
  };

  bool turn_ready(uint32_t slot, uint32_t turn) const;
  void advance_cq_head_locked();
  void ring(DoorbellKind kind, uint64_t value);

  const uint32_t id_;
  const uint32_t qsize_;
  // Turn counters are compared modulo 2^32 / Q so the 2^31-entry virtual
  // queue wraps cleanly.
  const uint32_t turn_mask_;
  DoorbellSink* sink_;
  PollConfig poll_;

  std::unique_ptr<SqSlot[]> sq_;
  std::unique_ptr<CqSlot[]> cq_;
  std::vector<std::atomic<uint32_t>> turn_counter_;
  MarkBits sq_mark_;
  MarkBits cq_mark_;

  std::atomic<uint32_t> ticket_;
  std::atomic<uint64_t> sq_tail_;
  std::atomic<uint64_t> sq_head_;
  std::atomic<uint64_t> cq_head_{0};
  SpinLock sq_lock_;
  SpinLock cq_lock_;

  std::atomic<uint64_t> sq_rings_{0};
  std::atomic<uint64_t> cq_rings_{0};
  std::atomic<uint64_t> enqueued_{0};
  std::atomic<uint64_t> consumed_{0};
  std::atomic<uint64_t> stamp_violations_{0};
};

}  // namespace bamsim
