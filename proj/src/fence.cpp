#include "bamsim/fence.hpp"

#include <mutex>
#include <string>

namespace bamsim {

FenceMode parse_fence_mode(std::string_view s) {
  if (s == "off") return FenceMode::off;
  if (s == "naive") return FenceMode::naive;
  if (s == "coalesced") return FenceMode::coalesced;
  throw ConfigError("unknown fence mode '" + std::string(s) + "' (off|naive|coalesced)");
}

const char* to_string(FenceMode m) {
  switch (m) {
    case FenceMode::off: return "off";
    case FenceMode::naive: return "naive";
    case FenceMode::coalesced: return "coalesced";
  }
  return "?";
}

FenceState::FenceState(FenceMode mode, uint64_t scratch_offset, PollConfig poll)
    : mode_(mode), scratch_offset_(scratch_offset), poll_(poll) {}

void FenceState::extra_read(QueuePair& qp) {
  IoCommand cmd;
  cmd.opcode = Opcode::read;
  cmd.lba = 0;
  cmd.block_count = 1;
  cmd.buffer_offset = scratch_offset_;
  const CompletionEntry ce = qp.submit_and_wait(cmd);
  extra_reads_.fetch_add(1, std::memory_order_relaxed);
  if (ce.status != Status::ok) throw IoError("fence read failed");
}

void FenceState::fence_after_completion(QueuePair& qp) {
  if (mode_ == FenceMode::off) return;
  fenced_.fetch_add(1, std::memory_order_relaxed);
  if (mode_ == FenceMode::naive) {
    extra_read(qp);
    return;
  }
  const uint64_t me = registered_.fetch_add(1, std::memory_order_acq_rel) + 1;
  Poller poller(poll_, "fence");
  while (covered_.load(std::memory_order_acquire) < me) {
    if (vq_lock_.try_lock()) {
      std::lock_guard<SpinLock> guard(vq_lock_, std::adopt_lock);
      if (covered_.load(std::memory_order_acquire) >= me) break;
      // Only threads registered before the read is submitted are covered by it.
      const uint64_t snapshot = registered_.load(std::memory_order_acquire);
      extra_read(qp);
      epoch_.fetch_add(1, std::memory_order_relaxed);
      covered_.store(snapshot, std::memory_order_release);
      break;
    }
    poller.pause();
  }
}

}  // namespace bamsim
