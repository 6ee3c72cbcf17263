#pragma once

// One simulated machine: device memory, devices, the I/O stack and the cache.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bamsim/array.hpp"
#include "bamsim/cache.hpp"
#include "bamsim/io_stack.hpp"
#include "bamsim/sim_device.hpp"
#include "bamsim/throughput_model.hpp"

namespace bamsim {

struct SystemConfig {
  DeviceProfile profile = builtin_profile("optane-p5800x");
  uint32_t num_devices = 1;
  uint64_t capacity_blocks = 1 << 16;
  uint32_t num_queues = 4;  // per device
  uint32_t queue_depth = 256;
  CacheConfig cache;
  FenceMode fence = FenceMode::off;
  VisibilityMode visibility = VisibilityMode::strict;
  double visibility_delay_us = 0;
  // Every array lives on device 0 and is mirrored on all other devices.
  bool replicate = false;
  // Device memory set aside for tiling buffers and benchmark targets.
  uint64_t staging_bytes = 32ull << 20;
  DeviceOptions device;
  // Model-mode knobs.
  InterconnectModel link;
  double queue_pair_iops = 128e3;
  uint64_t model_threads = 65536;

  void validate() const;
};

struct SystemCounters {
  uint64_t io_commands = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t bytes_transferred = 0;
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t doorbell_rings = 0;
  uint64_t extra_fence_reads = 0;

  SystemCounters operator-(const SystemCounters& o) const;
};

class System {
 public:
  explicit System(SystemConfig config);
  ~System();

  System(const System&) = delete;
  System& operator=(const System&) = delete;

  const SystemConfig& config() const { return config_; }
  DeviceMemory& memory() { return *memory_; }
  IoStack& io() { return *io_; }
  Cache& cache() { return *cache_; }
  std::span<SimDevice* const> devices() const { return device_ptrs_; }
  SimDevice& device(uint32_t i) { return *devices_.at(i); }

  // Reserves line-aligned space for an array: one extent per device (or all
  // of it on device 0 when replicating).
  ArraySpec place_array(std::string name, uint32_t element_size, uint64_t length);
  // Places and writes the array to every device that must hold it.
  template <typename T>
  ArraySpec load_array(std::string name, const std::vector<T>& data) {
    ArraySpec spec = place_array(std::move(name), sizeof(T), data.size());
    store(spec, std::as_bytes(std::span<const T>(data)));
    return spec;
  }
  void store(const ArraySpec& spec, std::span<const std::byte> image);

  // Staging region [offset, offset + bytes) of worker w out of `workers`.
  uint64_t staging_slice(uint32_t w, uint32_t workers, uint64_t bytes) const;

  ModelTopology topology() const;
  SystemCounters counters() const;

 private:
  SystemConfig config_;
  std::unique_ptr<DeviceMemory> memory_;
  std::vector<std::unique_ptr<SimDevice>> devices_;
  std::vector<SimDevice*> device_ptrs_;
  std::unique_ptr<IoStack> io_;
  std::unique_ptr<Cache> cache_;
  std::vector<uint64_t> next_lba_;
  uint64_t staging_base_ = 0;
};

}  // namespace bamsim
