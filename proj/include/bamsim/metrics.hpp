#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>

namespace bamsim {

struct RunMetrics {
  std::string workload;
  std::string mode;
  uint32_t devices = 0;
  uint32_t queues = 0;
  uint32_t depth = 0;
  uint32_t line_size = 0;
  uint64_t cache_bytes = 0;
  uint64_t threads = 0;
  uint64_t io_commands = 0;
  uint64_t bytes_transferred = 0;
  uint64_t bytes_used = 0;
  double amplification = 0;
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t doorbell_rings = 0;
  uint64_t extra_fence_reads = 0;
  double modeled_iops = 0;
  double modeled_seconds = 0;
  double wall_seconds = 0;
  uint64_t seed = 0;

  // amplification = bytes_transferred / bytes_used (0 when nothing was used).
  void finalize();
};

inline constexpr int kCsvSchemaVersion = 1;

// First line is "# bamsim-metrics v<version>", second the column header.
std::string csv_preamble();
std::string csv_row(const RunMetrics& m);
void write_csv(std::ostream& os, std::span<const RunMetrics> rows);

}  // namespace bamsim
