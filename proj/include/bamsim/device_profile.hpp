#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bamsim/queue_pair.hpp"

namespace bamsim {

// Latency and throughput envelope of one SSD.
struct DeviceProfile {
  std::string name;
  double read_latency_us = 0;
  double write_latency_us = 0;
  double read_iops_cap_512 = 0;
  double read_iops_cap_4k = 0;
  double write_iops_cap_512 = 0;
  double write_iops_cap_4k = 0;
  // Per-device link cap (bytes/sec).
  double link_bandwidth_Bps = 0;
  // Extra delay between completion posting and data visibility; 0 = strict.
  double visibility_delay_us = 0;

  // Throws ConfigError when any cap or latency is not positive.
  void validate() const;

  double latency_seconds(Opcode op) const {
    return (op == Opcode::read ? read_latency_us : write_latency_us) * 1e-6;
  }

  // Ops/sec ceiling for requests of `bytes`. Between the 512 B and 4 KiB table
  // points the ops cap is interpolated linearly and then limited by the
  // bandwidth implied by the 4 KiB point.
  double iops_cap(Opcode op, uint64_t bytes) const;
};

// Host link shared by all devices.
struct InterconnectModel {
  double shared_bandwidth_Bps = 26e9;
  // Protocol bytes moved per command besides payload: one 64 B submission
  // entry fetch plus one 16 B completion entry write.
  uint32_t command_overhead_bytes = 80;
};

// Names: "optane-p5800x", "samsung-pm1735", "samsung-980pro".
DeviceProfile builtin_profile(std::string_view name);
std::vector<std::string> builtin_profile_names();

// Parses {name, read_latency_us, write_latency_us, read_iops_cap_512, ...}.
// Missing fields fall back to the built-in profile of the same name, if any.
DeviceProfile parse_device_profile(std::string_view json_text);
std::string device_profile_to_json(const DeviceProfile& p);

// Little's Law: queue depth needed to sustain `ops_per_sec` at `latency_s`,
// rounded to the nearest request.
uint64_t littles_law_qd(double ops_per_sec, double latency_s);

}  // namespace bamsim
