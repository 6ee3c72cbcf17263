#include "bamsim/system.hpp"

#include <string>

namespace bamsim {

void SystemConfig::validate() const {
  profile.validate();
  cache.validate();
  if (num_devices == 0) throw ConfigError("need at least one device");
  if (num_queues == 0) throw ConfigError("need at least one queue per device");
  if (replicate && num_devices < 2) throw ConfigError("replication needs two or more devices");
  if (model_threads == 0) throw ConfigError("model threads must be positive");
}

SystemCounters SystemCounters::operator-(const SystemCounters& o) const {
  return SystemCounters{io_commands - o.io_commands,   reads - o.reads,
                        writes - o.writes,             bytes_transferred - o.bytes_transferred,
                        hits - o.hits,                 misses - o.misses,
                        doorbell_rings - o.doorbell_rings, extra_fence_reads - o.extra_fence_reads};
}

System::System(SystemConfig config) : config_(std::move(config)) {
  config_.validate();
  memory_ = std::make_unique<DeviceMemory>(config_.cache.capacity_bytes() + config_.staging_bytes +
                                           uint64_t{config_.num_devices} * kBlockSize + (1u << 20));
  DeviceOptions opts = config_.device;
  opts.capacity_blocks = config_.capacity_blocks;
  for (uint32_t d = 0; d < config_.num_devices; ++d) {
    devices_.push_back(std::make_unique<SimDevice>(d, config_.profile, opts, *memory_));
    devices_.back()->set_visibility_mode(config_.visibility, config_.visibility_delay_us);
    device_ptrs_.push_back(devices_.back().get());
  }
  io_ = std::make_unique<IoStack>(device_ptrs_, IoStackOptions{config_.num_queues, config_.queue_depth, config_.fence},
                                  *memory_);
  if (config_.replicate) {
    std::vector<uint32_t> replicas;
    for (uint32_t d = 1; d < config_.num_devices; ++d) replicas.push_back(d);
    io_->set_replicas(0, replicas);
  }
  staging_base_ = memory_->allocate(config_.staging_bytes);
  cache_ = std::make_unique<Cache>(config_.cache, *memory_, *io_);
  // lba 0 stays reserved as the fence read target.
  next_lba_.assign(config_.num_devices, config_.cache.line_size / kBlockSize);
  for (auto& d : devices_) d->start();
}

System::~System() {
  for (auto& d : devices_) d->shutdown();
}

ArraySpec System::place_array(std::string name, uint32_t element_size, uint64_t length) {
  const uint32_t ls = config_.cache.line_size;
  const uint64_t bpl = ls / kBlockSize;
  const uint64_t lines = array_blocks(element_size, length, ls) / bpl;
  ArraySpec spec;
  spec.name = std::move(name);
  spec.element_size = element_size;
  spec.length = length;
  const uint32_t spread = config_.replicate ? 1 : config_.num_devices;
  for (uint32_t d = 0; d < spread; ++d) {
    const uint64_t n = lines / spread + (d < lines % spread ? 1 : 0);
    if (n == 0) continue;
    uint64_t lba = next_lba_[d];
    if (config_.replicate) {
      for (uint64_t v : next_lba_) lba = std::max(lba, v);
    }
    if (lba + n * bpl > config_.capacity_blocks) {
      throw ConfigError("array '" + spec.name + "' does not fit on device " + std::to_string(d) + " (needs " +
                        std::to_string(lba + n * bpl) + " blocks)");
    }
    spec.extents.push_back({d, lba, n * bpl});
    if (config_.replicate) {
      for (auto& v : next_lba_) v = lba + n * bpl;
    } else {
      next_lba_[d] = lba + n * bpl;
    }
  }
  return spec;
}

void System::store(const ArraySpec& spec, std::span<const std::byte> image) {
  store_array(device_ptrs_, spec, image);
  if (!config_.replicate) return;
  for (uint32_t d = 1; d < config_.num_devices; ++d) {
    ArraySpec copy = spec;
    for (auto& e : copy.extents) e.device = d;
    store_array(device_ptrs_, copy, image);
  }
}

uint64_t System::staging_slice(uint32_t w, uint32_t workers, uint64_t bytes) const {
  const uint64_t per = (config_.staging_bytes / std::max<uint32_t>(workers, 1)) / kBlockSize * kBlockSize;
  if (bytes > per) {
    throw ConfigError("staging area too small: need " + std::to_string(bytes) + " bytes per worker, have " +
                      std::to_string(per));
  }
  return staging_base_ + uint64_t{w} * per;
}

ModelTopology System::topology() const {
  ModelTopology t;
  t.profile = config_.profile;
  t.devices = config_.num_devices;
  t.queues_per_device = config_.num_queues;
  t.queue_depth = config_.queue_depth;
  t.link = config_.link;
  t.queue_pair_iops = config_.queue_pair_iops;
  return t;
}

SystemCounters System::counters() const {
  SystemCounters c;
  const IoStackStats io = io_->stats();
  c.io_commands = io.commands;
  c.reads = io.reads;
  c.writes = io.writes;
  c.bytes_transferred = io.bytes_read + io.bytes_written;
  c.extra_fence_reads = io.extra_fence_reads;
  const CacheStats cs = cache_->stats();
  c.hits = cs.hits;
  c.misses = cs.misses;
  for (const auto& d : devices_) {
    const DeviceStats ds = d->stats();
    c.doorbell_rings += ds.sq_doorbell_writes + ds.cq_doorbell_writes;
  }
  return c;
}

}  // namespace bamsim
