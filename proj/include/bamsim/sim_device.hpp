#pragma once

// Simulated NVMe-like SSD controller.
//
// The controller side of every attached QueuePair: it fetches submission
// entries after SQ doorbell writes, services them against a backing block
// store, DMAs data to/from DeviceMemory and posts completion entries carrying
// its current SQ head. In stress mode a dedicated service thread drives
// service_step(); tests may instead call service_step() by hand for
// deterministic single-threaded traces.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "bamsim/device_memory.hpp"
#include "bamsim/device_profile.hpp"
#include "bamsim/queue_pair.hpp"

namespace bamsim {

enum class VisibilityMode : uint8_t { strict, relaxed };

struct DeviceOptions {
  uint64_t capacity_blocks = 1 << 16;
  // Max completions posted per CQ write episode.
  uint32_t completion_batch = 16;
  // Real-time service latency = profile latency * scale (0 = as fast as possible).
  double stress_latency_scale = 0.0;
  bool record_command_log = false;
  // Doorbell writes are slow MMIO over the interconnect; the writing thread
  // gives up the CPU for the duration of the write.
  bool doorbell_write_yields = true;
  PollConfig poll;
};

struct DeviceCommandRecord {
  uint32_t device = 0;
  uint32_t queue = 0;
  Opcode opcode = Opcode::read;
  uint64_t lba = 0;
  uint32_t block_count = 0;
  Status status = Status::ok;
};

struct DeviceStats {
  uint64_t commands_fetched = 0;
  uint64_t completions_posted = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t bytes_read = 0;     // backing -> memory
  uint64_t bytes_written = 0;  // memory -> backing
  uint64_t errors = 0;
  uint64_t sq_doorbell_writes = 0;
  uint64_t cq_doorbell_writes = 0;
  uint64_t doorbell_regressions = 0;
  uint64_t deferred_copies = 0;
};

class SimDevice final : public DoorbellSink {
 public:
  static constexpr uint32_t kMaxQueuePairs = 4096;

  SimDevice(uint32_t id, DeviceProfile profile, DeviceOptions options, DeviceMemory& memory);
  ~SimDevice() override;

  SimDevice(const SimDevice&) = delete;
  SimDevice& operator=(const SimDevice&) = delete;

  uint32_t id() const { return id_; }
  const DeviceProfile& profile() const { return profile_; }
  uint64_t capacity_blocks() const { return options_.capacity_blocks; }
  DeviceMemory& memory() { return memory_; }

  // Registers a new queue pair whose doorbells are wired to this device.
  // Throws ConfigError for a bad qsize and ProtocolError after shutdown().
  QueuePair& attach_queue_pair(uint32_t qsize);
  uint32_t queue_pair_count() const { return binding_count_.load(std::memory_order_acquire); }
  QueuePair& queue_pair(uint32_t index);

  // Doorbell endpoint. Values are virtual positions and must strictly increase
  // per doorbell; a regression throws ProtocolError.
  void ring(QueuePair& qp, DoorbellKind kind, uint64_t value) override;
  void doorbell_write(QueuePair& qp, DoorbellKind kind, uint64_t value) { ring(qp, kind, value); }

  void set_visibility_mode(VisibilityMode mode, double delay_us = 0.0);
  VisibilityMode visibility_mode() const { return visibility_.load(std::memory_order_acquire); }

  // Launches / stops the background service thread.
  void start();
  void shutdown();
  bool running() const { return thread_.joinable(); }

  // One pass: fetch, execute ready commands, post completions, apply due
  // deferred copies. Returns true if anything happened. Not thread-safe with
  // respect to itself; do not call while the service thread runs.
  bool service_step();

  // Host-side access to the backing store (loading datasets, audits).
  void store_blocks(uint64_t lba, std::span<const std::byte> data);
  void load_blocks(uint64_t lba, std::span<std::byte> out) const;

  DeviceStats stats() const;
  std::vector<DeviceCommandRecord> command_log() const;
  void clear_command_log();
  // Commands fetched but not yet posted (in service or awaiting CQ room).
  uint64_t in_service() const { return in_service_.load(std::memory_order_acquire); }

 private:
  struct Binding {
    std::unique_ptr<QueuePair> qp;
    std::atomic<uint64_t> sq_tail_db{0};
    std::atomic<uint64_t> cq_head_db{0};
    // Service-thread state.
    uint64_t fetched = 0;
    uint64_t cq_tail = 0;
    std::deque<std::pair<uint32_t, Status>> outbound;
  };
  struct InFlight {
    IoCommand cmd;
    Binding* binding;
    std::chrono::steady_clock::time_point ready;
  };
  struct DeferredCopy {
    std::chrono::steady_clock::time_point due;
    uint64_t offset;
    std::vector<std::byte> bytes;
  };

  Binding& binding_of(const QueuePair& qp);
  Status execute(const IoCommand& cmd, uint32_t queue, std::chrono::steady_clock::time_point now);
  bool post_completions(Binding& b);
  bool apply_deferred(std::chrono::steady_clock::time_point now, bool all);
  bool has_pending_work() const;
  void service_loop(std::stop_token stop);
  void wake();

  template <typename Fn>
  void with_block_locks(uint64_t lba, uint64_t count, Fn&& fn) const;

  const uint32_t id_;
  const DeviceProfile profile_;
  const DeviceOptions options_;
  DeviceMemory& memory_;
  std::vector<std::byte> backing_;
  mutable std::array<std::mutex, 64> stripes_;

  std::vector<std::unique_ptr<Binding>> bindings_;
  std::atomic<uint32_t> binding_count_{0};
  std::mutex attach_mutex_;
  std::atomic<bool> shut_down_{false};

  std::atomic<VisibilityMode> visibility_{VisibilityMode::strict};
  std::atomic<double> visibility_delay_us_{0.0};

  std::deque<InFlight> in_flight_;
  std::deque<DeferredCopy> deferred_;
  std::atomic<uint64_t> in_service_{0};
  uint32_t rr_ = 0;

  std::atomic<uint64_t> fetched_{0}, posted_{0}, reads_{0}, writes_{0}, bytes_read_{0},
      bytes_written_{0}, errors_{0}, sq_db_{0}, cq_db_{0}, regressions_{0}, deferred_count_{0};

  mutable std::mutex log_mutex_;
  std::vector<DeviceCommandRecord> log_;

  std::mutex sleep_mutex_;
  std::condition_variable sleep_cv_;
  std::atomic<bool> sleeping_{false};
  std::jthread thread_;
};

}  // namespace bamsim
