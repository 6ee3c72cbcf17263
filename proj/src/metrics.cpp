#include "bamsim/metrics.hpp"

#include <cstdio>

namespace bamsim {

void RunMetrics::finalize() {
  amplification = bytes_used ? static_cast<double>(bytes_transferred) / static_cast<double>(bytes_used) : 0.0;
}

std::string csv_preamble() {
  return "# bamsim-metrics v" + std::to_string(kCsvSchemaVersion) +
         "\nworkload,mode,devices,queues,depth,line_size,cache_bytes,threads,io_commands,"
         "bytes_transferred,bytes_used,amplification,hits,misses,doorbell_rings,extra_fence_reads,"
         "modeled_iops,modeled_seconds,wall_seconds,seed\n";
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string csv_row(const RunMetrics& m) {
  std::string s;
  s += m.workload + ',' + m.mode + ',';
  s += std::to_string(m.devices) + ',' + std::to_string(m.queues) + ',' + std::to_string(m.depth) + ',';
  s += std::to_string(m.line_size) + ',' + std::to_string(m.cache_bytes) + ',' + std::to_string(m.threads) + ',';
  s += std::to_string(m.io_commands) + ',' + std::to_string(m.bytes_transferred) + ',';
  s += std::to_string(m.bytes_used) + ',' + num(m.amplification) + ',';
  s += std::to_string(m.hits) + ',' + std::to_string(m.misses) + ',';
  s += std::to_string(m.doorbell_rings) + ',' + std::to_string(m.extra_fence_reads) + ',';
  s += num(m.modeled_iops) + ',' + num(m.modeled_seconds) + ',' + num(m.wall_seconds) + ',';
  s += std::to_string(m.seed) + '\n';
  return s;
}

void write_csv(std::ostream& os, std::span<const RunMetrics> rows) {
  os << csv_preamble();
  for (const auto& r : rows) os << csv_row(r);
}

}  // namespace bamsim
