#pragma once

// Experiment drivers. Each run returns exact results plus RunMetrics; modeled
// times come from the counted commands fed through the throughput model.

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "bamsim/array.hpp"
#include "bamsim/dataset.hpp"
#include "bamsim/graph.hpp"
#include "bamsim/metrics.hpp"
#include "bamsim/system.hpp"

namespace bamsim {

enum class RunMode : uint8_t { stress, model };
RunMode parse_run_mode(std::string_view s);
const char* to_string(RunMode m);

// tiling: CPU-orchestrated baseline that moves whole tiles.
// ondemand: accesses go through arrays and the cache.
enum class AccessMode : uint8_t { tiling, ondemand };
AccessMode parse_access_mode(std::string_view s);
const char* to_string(AccessMode m);

// Fills the shared RunMetrics columns from a system and a counter delta.
RunMetrics base_metrics(const System& sys, std::string_view workload, RunMode mode, const SystemCounters& delta,
                        uint64_t seed);
// Modeled time for `reads` and `writes` line-sized commands, not overlapped.
double modeled_serial_seconds(const System& sys, uint64_t reads, uint64_t writes);

// ---- random I/O microbenchmark ----------------------------------------------

struct RandBenchConfig {
  uint64_t threads = 1024;
  uint32_t access_size = 512;
  uint64_t reqs_per_thread = 1;
  Opcode op = Opcode::read;
  bool random = true;
};

// Model mode needs only the topology; stress mode also drives the devices of
// `sys` with `workers` OS threads.
RunMetrics run_randbench(const RandBenchConfig& cfg, const ModelTopology& topo, RunMode mode, uint64_t seed,
                         System* sys = nullptr, uint32_t workers = 1);

// ---- graphs -----------------------------------------------------------------

struct DeviceGraph {
  uint64_t nodes = 0;
  uint64_t edges = 0;
  std::unique_ptr<Array<uint64_t>> offsets;
  std::unique_ptr<Array<uint64_t>> cols;
};

DeviceGraph load_graph_to_system(System& sys, const CsrGraph& g);

inline constexpr uint64_t kUnreachable = ~uint64_t{0};

struct BfsResult {
  std::vector<std::vector<uint64_t>> distances;  // one vector per source
  RunMetrics metrics;
};

BfsResult run_bfs(System& sys, DeviceGraph& g, std::span<const uint64_t> sources, uint32_t workers,
                  RunMode mode = RunMode::stress, uint64_t seed = 0);

struct CcResult {
  std::vector<uint64_t> labels;  // smallest node id in each component
  uint64_t components = 0;
  RunMetrics metrics;
};

// `directed` describes the input; directed graphs are rejected.
CcResult run_cc(System& sys, DeviceGraph& g, uint32_t workers, bool directed = false, RunMode mode = RunMode::stress,
                uint64_t seed = 0);

// In-memory references.
std::vector<uint64_t> reference_bfs(const CsrGraph& g, uint64_t source);
std::vector<uint64_t> reference_cc(const CsrGraph& g);

// ---- columnar analytics -----------------------------------------------------

struct DeviceDataset {
  uint64_t rows = 0;
  std::vector<std::unique_ptr<Array<uint64_t>>> columns;
};

DeviceDataset load_dataset_to_system(System& sys, const ColumnarDataset& ds);

struct AnalyticsResult {
  uint64_t answer = 0;
  uint64_t qualifying = 0;
  RunMetrics metrics;
};

AnalyticsResult run_analytics(System& sys, DeviceDataset& ds, uint32_t level, AccessMode mode, uint32_t workers,
                              RunMode run_mode = RunMode::stress, uint64_t seed = 0);

// ---- vectorAdd --------------------------------------------------------------

struct VecAddResult {
  uint64_t mismatches = 0;
  ArraySpec out_spec;
  RunMetrics metrics;
};

// Inputs derive from `seed`; out[i] = a[i] + b[i] is checked against the
// backing store after the run.
inline constexpr uint32_t kVecAddTiles = 5;
VecAddResult run_vecadd(System& sys, uint64_t n, AccessMode mode, uint32_t workers, uint64_t seed,
                        RunMode run_mode = RunMode::stress);
uint64_t vecadd_input(uint64_t seed, uint64_t which, uint64_t i);

}  // namespace bamsim
