#pragma once

// Data-visibility fence for devices whose completions can overtake their data.
//
// Coalesced mode: threads that saw a completion register, then race for one
// lock. The winner submits a single 1-block READ and, once it completes, marks
// every thread registered before the submission as covered. Losers wait for
// coverage and re-race only if the winner's read started before they
// registered. Naive mode: every caller issues its own extra READ.

#include <atomic>
#include <cstdint>
#include <string_view>

#include "bamsim/common.hpp"
#include "bamsim/queue_pair.hpp"

namespace bamsim {

enum class FenceMode : uint8_t { off, naive, coalesced };

FenceMode parse_fence_mode(std::string_view s);
const char* to_string(FenceMode m);

class FenceState {
 public:
  // scratch_offset: 512 bytes of device memory the extra reads land in.
  FenceState(FenceMode mode, uint64_t scratch_offset, PollConfig poll = {});

  FenceMode mode() const { return mode_; }

  // Returns once every data write of the caller's completed command is visible.
  void fence_after_completion(QueuePair& qp);

  uint64_t fenced() const { return fenced_.load(std::memory_order_relaxed); }
  uint64_t extra_reads() const { return extra_reads_.load(std::memory_order_relaxed); }
  uint64_t epochs() const { return epoch_.load(std::memory_order_relaxed); }

 private:
  void extra_read(QueuePair& qp);

  const FenceMode mode_;
  const uint64_t scratch_offset_;
  const PollConfig poll_;
  SpinLock vq_lock_;
  std::atomic<uint64_t> registered_{0};
  std::atomic<uint64_t> covered_{0};
  std::atomic<uint64_t> epoch_{0};
  std::atomic<uint64_t> fenced_{0};
  std::atomic<uint64_t> extra_reads_{0};
};

}  // namespace bamsim
