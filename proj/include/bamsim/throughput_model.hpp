#pragma once

// Model-mode throughput accounting.
//
// Two independent routes to the same steady-state numbers: a closed form
// (min over every rate ceiling, Little's Law for the concurrency ceiling) and a
// discrete-event simulation of closed-loop logical threads pushing requests
// through token buckets for each device, each queue pair and the shared link.

#include <cstdint>

#include "bamsim/device_profile.hpp"

namespace bamsim {

struct ModelTopology {
  DeviceProfile profile = builtin_profile("optane-p5800x");
  uint32_t devices = 1;
  uint32_t queues_per_device = 128;
  uint32_t queue_depth = 1024;
  InterconnectModel link;
  // Serialized protocol throughput of one queue pair (ticketing, marks,
  // doorbell writes) as seen by the accelerator.
  double queue_pair_iops = 128e3;

  uint32_t total_queues() const { return devices * queues_per_device; }
  void validate() const;
};

// Ops/sec one device sustains for `bytes`-sized requests: min of its IOPS cap
// and its own link.
double device_iops(const ModelTopology& topo, Opcode op, uint64_t bytes);

// Closed-form aggregate ops/sec with `inflight` outstanding requests.
double aggregate_iops(const ModelTopology& topo, Opcode op, uint64_t bytes, uint64_t inflight);

// Time to complete `commands` requests with `inflight` concurrency.
double phase_seconds(const ModelTopology& topo, Opcode op, uint64_t bytes, uint64_t commands,
                     uint64_t inflight);

struct RandBenchModelResult {
  uint64_t requests = 0;
  double seconds = 0;
  double iops = 0;
};

// Discrete-event run of `threads` logical threads each issuing
// `reqs_per_thread` synchronous requests, distributed round-robin over devices
// and then over each device's queues.
RandBenchModelResult simulate_randbench(const ModelTopology& topo, Opcode op, uint64_t bytes,
                                        uint64_t threads, uint64_t reqs_per_thread);

}  // namespace bamsim
