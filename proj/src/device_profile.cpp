#include "bamsim/device_profile.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "bamsim/common.hpp"

namespace bamsim {

namespace {

const std::vector<DeviceProfile>& builtin_profiles() {
  static const std::vector<DeviceProfile> profiles = {
      // name, rd lat, wr lat, rd 512, rd 4k, wr 512, wr 4k, link
      {"optane-p5800x", 11.0, 11.0, 5.1e6, 1.5e6, 1.0e6, 1.5e6, 7.0e9, 0.0},
      {"samsung-pm1735", 25.0, 25.0, 1.1e6, 1.6e6, 351e3, 351e3, 7.0e9, 0.0},
      {"samsung-980pro", 324.0, 324.0, 750e3, 750e3, 172e3, 172e3, 7.0e9, 0.0},
  };
  return profiles;
}

}  // namespace

void DeviceProfile::validate() const {
  const double caps[] = {read_iops_cap_512, read_iops_cap_4k, write_iops_cap_512, write_iops_cap_4k,
                         link_bandwidth_Bps};
  for (double c : caps) {
    if (!(c > 0)) throw ConfigError("device profile '" + name + "': caps must be positive");
  }
  if (!(read_latency_us > 0) || !(write_latency_us > 0)) {
    throw ConfigError("device profile '" + name + "': latencies must be positive");
  }
  if (visibility_delay_us < 0) throw ConfigError("device profile '" + name + "': negative visibility delay");
}

double DeviceProfile::iops_cap(Opcode op, uint64_t bytes) const {
  const double cap512 = op == Opcode::read ? read_iops_cap_512 : write_iops_cap_512;
  const double cap4k = op == Opcode::read ? read_iops_cap_4k : write_iops_cap_4k;
  const double size = static_cast<double>(std::max<uint64_t>(bytes, kBlockSize));
  const double bw_cap = cap4k * 4096.0 / size;
  double ops_cap;
  if (size <= 512.0) {
    ops_cap = cap512;
  } else if (size >= 4096.0) {
    ops_cap = cap4k;
  } else {
    ops_cap = cap512 + (cap4k - cap512) * (size - 512.0) / (4096.0 - 512.0);
  }
  return std::min(ops_cap, size <= 512.0 ? ops_cap : bw_cap);
}

DeviceProfile builtin_profile(std::string_view name) {
  for (const auto& p : builtin_profiles()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown device profile '" + std::string(name) + "'");
}

std::vector<std::string> builtin_profile_names() {
  std::vector<std::string> names;
  for (const auto& p : builtin_profiles()) names.push_back(p.name);
  return names;
}

DeviceProfile parse_device_profile(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("device profile: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("device profile must be a JSON object");

  static const std::set<std::string> known = {
      "name", "read_latency_us", "write_latency_us", "read_iops_cap_512", "read_iops_cap_4k",
      "write_iops_cap_512", "write_iops_cap_4k", "link_bandwidth_Bps", "visibility_delay_us"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("device profile: unknown key '" + key + "'");
  }
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("device profile: 'name' required");

  DeviceProfile p;
  p.name = j["name"].get<std::string>();
  const auto& names = builtin_profile_names();
  if (std::find(names.begin(), names.end(), p.name) != names.end()) p = builtin_profile(p.name);

  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("device profile: '") + key + "' must be a number");
    out = j[key].get<double>();
  };
  num("read_latency_us", p.read_latency_us);
  num("write_latency_us", p.write_latency_us);
  num("read_iops_cap_512", p.read_iops_cap_512);
  num("read_iops_cap_4k", p.read_iops_cap_4k);
  num("write_iops_cap_512", p.write_iops_cap_512);
  num("write_iops_cap_4k", p.write_iops_cap_4k);
  num("link_bandwidth_Bps", p.link_bandwidth_Bps);
  num("visibility_delay_us", p.visibility_delay_us);
  p.validate();
  return p;
}

std::string device_profile_to_json(const DeviceProfile& p) {
  nlohmann::json j = {{"name", p.name},
                      {"read_latency_us", p.read_latency_us},
                      {"write_latency_us", p.write_latency_us},
                      {"read_iops_cap_512", p.read_iops_cap_512},
                      {"read_iops_cap_4k", p.read_iops_cap_4k},
                      {"write_iops_cap_512", p.write_iops_cap_512},
                      {"write_iops_cap_4k", p.write_iops_cap_4k},
                      {"link_bandwidth_Bps", p.link_bandwidth_Bps},
                      {"visibility_delay_us", p.visibility_delay_us}};
  return j.dump();
}

uint64_t littles_law_qd(double ops_per_sec, double latency_s) {
  if (!(ops_per_sec > 0) || !(latency_s > 0)) {
    throw ConfigError("littles_law_qd: throughput and latency must be positive");
  }
  return static_cast<uint64_t>(std::llround(ops_per_sec * latency_s));
}

}  // namespace bamsim
