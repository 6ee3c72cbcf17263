#include "bamsim/io_stack.hpp"

#include <string>

namespace bamsim {

IoStack::IoStack(std::vector<SimDevice*> devices, IoStackOptions options, DeviceMemory& memory)
    : devices_(std::move(devices)), options_(options) {
  if (devices_.empty()) throw ConfigError("io stack needs at least one device");
  if (options_.queues_per_device == 0) throw ConfigError("need at least one queue per device");
  for (uint32_t d = 0; d < devices_.size(); ++d) {
    auto pd = std::make_unique<PerDevice>();
    for (uint32_t q = 0; q < options_.queues_per_device; ++q) {
      pd->queues.push_back(&devices_[d]->attach_queue_pair(options_.queue_depth));
    }
    pd->read_set = {d};
    per_device_.push_back(std::move(pd));
    fences_.push_back(std::make_unique<FenceState>(options_.fence, memory.allocate(kBlockSize)));
  }
}

QueuePair& IoStack::next_queue(uint32_t device) {
  PerDevice& pd = *per_device_.at(device);
  const uint64_t k = pd.rr.fetch_add(1, std::memory_order_relaxed);
  return *pd.queues[k % pd.queues.size()];
}

CompletionEntry IoStack::submit(uint32_t device, IoCommand cmd) {
  QueuePair& qp = next_queue(device);
  const CompletionEntry ce = qp.submit_and_wait(cmd);
  commands_.fetch_add(1, std::memory_order_relaxed);
  const uint64_t bytes = uint64_t{cmd.block_count} * kBlockSize;
  if (ce.status != Status::ok) {
    errors_.fetch_add(1, std::memory_order_relaxed);
    return ce;
  }
  if (cmd.opcode == Opcode::read) {
    reads_.fetch_add(1, std::memory_order_relaxed);
    bytes_read_.fetch_add(bytes, std::memory_order_relaxed);
    fences_[device]->fence_after_completion(qp);
  } else {
    writes_.fetch_add(1, std::memory_order_relaxed);
    bytes_written_.fetch_add(bytes, std::memory_order_relaxed);
  }
  return ce;
}

void IoStack::set_replicas(uint32_t primary, std::vector<uint32_t> replicas) {
  if (primary >= devices_.size()) throw ConfigError("replica primary out of range");
  std::vector<uint32_t> set{primary};
  for (uint32_t r : replicas) {
    if (r >= devices_.size() || r == primary) throw ConfigError("bad replica device " + std::to_string(r));
    if (devices_[r]->capacity_blocks() < devices_[primary]->capacity_blocks()) {
      throw ConfigError("replica device smaller than its primary");
    }
    set.push_back(r);
  }
  per_device_[primary]->read_set = std::move(set);
}

Status IoStack::transfer(Opcode op, const LineId& line, uint64_t buffer_offset, uint32_t bytes) {
  if (bytes == 0 || bytes % kBlockSize != 0) throw ConfigError("line transfers must be whole blocks");
  IoCommand cmd;
  cmd.opcode = op;
  cmd.lba = line.lba;
  cmd.block_count = bytes / kBlockSize;
  cmd.buffer_offset = buffer_offset;
  PerDevice& pd = *per_device_.at(line.device);
  if (op == Opcode::read) {
    const uint64_t k = pd.read_rr.fetch_add(1, std::memory_order_relaxed);
    return submit(pd.read_set[k % pd.read_set.size()], cmd).status;
  }
  Status status = Status::ok;
  for (uint32_t d : pd.read_set) {
    if (submit(d, cmd).status != Status::ok) status = Status::error;
  }
  return status;
}

Status IoStack::read_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) {
  return transfer(Opcode::read, line, buffer_offset, bytes);
}

Status IoStack::write_line(const LineId& line, uint64_t buffer_offset, uint32_t bytes) {
  return transfer(Opcode::write, line, buffer_offset, bytes);
}

IoStackStats IoStack::stats() const {
  IoStackStats s{commands_.load(), reads_.load(), writes_.load(), bytes_read_.load(),
                 bytes_written_.load(), errors_.load(), 0, 0};
  for (const auto& f : fences_) {
    s.fenced += f->fenced();
    s.extra_fence_reads += f->extra_reads();
  }
  return s;
}

}  // namespace bamsim
