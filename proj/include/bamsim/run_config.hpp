#pragma once

// JSON run configuration and the runner that executes it.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bamsim/dataset.hpp"
#include "bamsim/fence.hpp"
#include "bamsim/graph.hpp"
#include "bamsim/metrics.hpp"
#include "bamsim/system.hpp"
#include "bamsim/workloads.hpp"

namespace bamsim {

enum class WorkloadKind : uint8_t { randbench, bfs, cc, analytics, vecadd };
WorkloadKind parse_workload_kind(std::string_view s);
const char* to_string(WorkloadKind k);

struct GraphSource {
  std::string path;  // empty: generate
  GraphKind kind = GraphKind::uniform;
  uint64_t nodes = 100'000;
  uint32_t avg_degree = 20;
  uint64_t seed = 1;
  bool directed = false;
};

struct DatasetSource {
  std::string path;  // empty: generate
  DatasetSpec spec;
};

struct WorkloadConfig {
  WorkloadKind kind = WorkloadKind::randbench;
  // randbench
  uint32_t access_size = 512;
  uint64_t reqs_per_thread = 1;
  Opcode op = Opcode::read;
  bool random = true;
  // bfs / cc
  GraphSource graph;
  uint32_t sources = 1;
  // analytics
  DatasetSource dataset;
  uint32_t level = 1;
  // analytics / vecadd
  AccessMode access = AccessMode::ondemand;
  // vecadd
  uint64_t n = 1'000'000;
};

struct RunConfig {
  std::string profile = "optane-p5800x";
  std::optional<DeviceProfile> custom_profile;
  uint32_t devices = 1;
  uint64_t capacity_blocks = 0;  // 0: sized from the workload
  bool replicate = false;
  uint32_t num_queues = 128;
  uint32_t queue_depth = 1024;
  uint32_t line_size = 4096;
  uint64_t cache_bytes = 64ull << 20;
  FenceMode fence = FenceMode::off;
  VisibilityMode visibility = VisibilityMode::strict;
  double visibility_delay_us = 0;
  RunMode mode = RunMode::model;
  uint64_t seed = 1;
  uint64_t threads = 65536;  // logical threads
  uint32_t workers = 0;      // OS threads; 0 = hardware concurrency
  double queue_pair_iops = 128e3;
  InterconnectModel link;
  WorkloadConfig workload;

  DeviceProfile device_profile() const;
  void validate() const;
};

// Unknown keys anywhere are rejected with ConfigError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);

// Worker threads for a run: model mode uses one so results are reproducible;
// BAMSIM_THREADS caps the pool.
uint32_t effective_workers(const RunConfig& cfg);

// Builds the system the workload needs and runs it. Model mode reports zero
// wall time.
RunMetrics execute_run(const RunConfig& cfg);

struct SweepPoint {
  uint64_t value = 0;
  RunMetrics metrics;
  double relative_performance = 0;  // baseline modeled time / this point's
};

// knob: "num_queues" (total queue pairs across devices) or "cache_bytes".
// The first value is the baseline.
std::vector<SweepPoint> run_sweep(const RunConfig& base, std::string_view knob, const std::vector<uint64_t>& values);

}  // namespace bamsim
