#pragma once

// Client-side storage stack: queue pairs on every device, round-robin queue
// selection, read replicas and the optional visibility fence.

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "bamsim/backend.hpp"
#include "bamsim/fence.hpp"
#include "bamsim/sim_device.hpp"

namespace bamsim {

struct IoStackOptions {
  uint32_t queues_per_device = 1;
  uint32_t queue_depth = 1024;
  FenceMode fence = FenceMode::off;
};

struct IoStackStats {
  uint64_t commands = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t bytes_read = 0;
  uint64_t bytes_written = 0;
  uint64_t errors = 0;
  uint64_t fenced = 0;
  uint64_t extra_fence_reads = 0;
};

class IoStack final : public CacheBackend {
 public:
  IoStack(std::vector<SimDevice*> devices, IoStackOptions options, DeviceMemory& memory);

  IoStack(const IoStack&) = delete;
  IoStack& operator=(const IoStack&) = delete;

  uint32_t device_count() const { return static_cast<uint32_t>(devices_.size()); }
  SimDevice& device(uint32_t i) { return *devices_.at(i); }
  const IoStackOptions& options() const { return options_; }

  // Next queue of `device` in round-robin order.
  QueuePair& next_queue(uint32_t device);

  // Blocking round trip on `device`. Successful reads pass through the fence.
  CompletionEntry submit(uint32_t device, IoCommand cmd);

  // Reads of `primary` rotate over it and its replicas; writes go to all.
  // Replicas hold the same lbas as the primary.
  void set_replicas(uint32_t primary, std::vector<uint32_t> replicas);

  Status read_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) override;
  Status write_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) override;

  FenceState& fence_state(uint32_t device) { return *fences_.at(device); }
  IoStackStats stats() const;

 private:
  struct PerDevice {
    std::vector<QueuePair*> queues;
    std::atomic<uint64_t> rr{0};
    std::vector<uint32_t> read_set;
    std::atomic<uint64_t> read_rr{0};
  };

  Status transfer(Opcode op, const LineId& line, uint64_t buffer_offset, uint32_t bytes);

  std::vector<SimDevice*> devices_;
  IoStackOptions options_;
  std::vector<std::unique_ptr<PerDevice>> per_device_;
  std::vector<std::unique_ptr<FenceState>> fences_;
  std::atomic<uint64_t> commands_{0}, reads_{0}, writes_{0}, bytes_read_{0}, bytes_written_{0}, errors_{0};
};

}  // namespace bamsim
