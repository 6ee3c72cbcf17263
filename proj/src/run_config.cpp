#include "bamsim/run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace bamsim {

using nlohmann::json;

WorkloadKind parse_workload_kind(std::string_view s) {
  if (s == "randbench") return WorkloadKind::randbench;
  if (s == "bfs") return WorkloadKind::bfs;
  if (s == "cc") return WorkloadKind::cc;
  if (s == "analytics") return WorkloadKind::analytics;
  if (s == "vecadd") return WorkloadKind::vecadd;
  throw ConfigError("unknown workload '" + std::string(s) + "'");
}

const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::randbench: return "randbench";
    case WorkloadKind::bfs: return "bfs";
    case WorkloadKind::cc: return "cc";
    case WorkloadKind::analytics: return "analytics";
    case WorkloadKind::vecadd: return "vecadd";
  }
  return "?";
}

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* key, uint64_t& out) {
    if (const json* v = raw(key)) out = as_uint(*v, key);
  }
  void get(const char* key, uint32_t& out) {
    if (const json* v = raw(key)) {
      const uint64_t x = as_uint(*v, key);
      if (x > UINT32_MAX) throw ConfigError(where_ + "." + key + ": value too large");
      out = static_cast<uint32_t>(x);
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(where_ + "." + key + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(where_ + "." + key + ": expected a string");
      out = v->get<std::string>();
    }
  }
  std::optional<std::string> str(const char* key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    std::string s;
    get(key, s);
    return s;
  }

  std::string child(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  uint64_t as_uint(const json& v, const char* key) const {
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<int64_t>() < 0) throw ConfigError(where_ + "." + key + ": must be non-negative");
      return static_cast<uint64_t>(v.get<int64_t>());
    }
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d < 0 || d != std::floor(d) || d > 1.8e19) throw ConfigError(where_ + "." + key + ": expected an integer");
      return static_cast<uint64_t>(d);
    }
    throw ConfigError(where_ + "." + key + ": expected an integer");
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_graph(const json& j, GraphSource& g, const std::string& where) {
  ObjectReader r(j, where);
  r.get("path", g.path);
  if (auto k = r.str("kind")) g.kind = parse_graph_kind(*k);
  r.get("nodes", g.nodes);
  r.get("avg_degree", g.avg_degree);
  r.get("seed", g.seed);
  r.get("directed", g.directed);
  r.finish();
}

void read_dataset(const json& j, DatasetSource& d, const std::string& where) {
  ObjectReader r(j, where);
  r.get("path", d.path);
  r.get("rows", d.spec.rows);
  r.get("selectivity", d.spec.selectivity);
  r.get("cluster", d.spec.cluster);
  r.get("seed", d.spec.seed);
  r.finish();
}

void read_workload(const json& j, WorkloadConfig& w) {
  ObjectReader r(j, "workload");
  if (auto k = r.str("kind")) {
    w.kind = parse_workload_kind(*k);
  } else {
    throw ConfigError("workload.kind is required");
  }
  r.get("access_size", w.access_size);
  r.get("reqs_per_thread", w.reqs_per_thread);
  if (auto op = r.str("op")) {
    if (*op == "read") {
      w.op = Opcode::read;
    } else if (*op == "write") {
      w.op = Opcode::write;
    } else {
      throw ConfigError("workload.op must be read or write");
    }
  }
  r.get("random", w.random);
  if (const json* g = r.raw("graph")) read_graph(*g, w.graph, "workload.graph");
  r.get("sources", w.sources);
  if (const json* d = r.raw("dataset")) read_dataset(*d, w.dataset, "workload.dataset");
  r.get("level", w.level);
  if (auto a = r.str("access")) w.access = parse_access_mode(*a);
  r.get("n", w.n);
  r.finish();
}

}  // namespace

DeviceProfile RunConfig::device_profile() const { return custom_profile ? *custom_profile : builtin_profile(profile); }

void RunConfig::validate() const {
  device_profile().validate();
  if (devices == 0) throw ConfigError("devices.count must be positive");
  if (num_queues == 0) throw ConfigError("queue.num_queues must be positive");
  if (!is_power_of_two(queue_depth) || queue_depth < QueuePair::kMinQueueSize ||
      queue_depth > QueuePair::kMaxQueueSize) {
    throw ConfigError("queue.queue_depth must be a power of two in [2, 65536]");
  }
  if (!is_power_of_two(line_size) || line_size < kBlockSize) throw ConfigError("cache.line_size must be a power of two >= 512");
  if (cache_bytes < line_size) throw ConfigError("cache.capacity_bytes must hold at least one line");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (replicate && devices < 2) throw ConfigError("devices.replicate needs two or more devices");
  if (workload.level > 5) throw ConfigError("workload.level must be 0..5");
  if (workload.sources == 0) throw ConfigError("workload.sources must be positive");
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  RunConfig c;
  ObjectReader r(j, "config");
  if (const json* d = r.raw("devices")) {
    ObjectReader dr(*d, "devices");
    if (const json* p = dr.raw("profile")) {
      if (p->is_string()) {
        c.profile = p->get<std::string>();
        builtin_profile(c.profile);
      } else {
        c.custom_profile = parse_device_profile(p->dump());
        c.profile = c.custom_profile->name;
      }
    }
    dr.get("count", c.devices);
    dr.get("capacity_blocks", c.capacity_blocks);
    dr.get("replicate", c.replicate);
    dr.finish();
  }
  if (const json* q = r.raw("queue")) {
    ObjectReader qr(*q, "queue");
    qr.get("num_queues", c.num_queues);
    qr.get("queue_depth", c.queue_depth);
    qr.finish();
  }
  if (const json* ca = r.raw("cache")) {
    ObjectReader cr(*ca, "cache");
    cr.get("line_size", c.line_size);
    cr.get("capacity_bytes", c.cache_bytes);
    cr.finish();
  }
  if (auto f = r.str("fence")) c.fence = parse_fence_mode(*f);
  if (const json* v = r.raw("visibility")) {
    std::string mode = "strict";
    if (v->is_string()) {
      mode = v->get<std::string>();
    } else {
      ObjectReader vr(*v, "visibility");
      vr.get("mode", mode);
      vr.get("delay_us", c.visibility_delay_us);
      vr.finish();
    }
    if (mode == "strict") {
      c.visibility = VisibilityMode::strict;
    } else if (mode == "relaxed") {
      c.visibility = VisibilityMode::relaxed;
    } else {
      throw ConfigError("visibility.mode must be strict or relaxed");
    }
  }
  if (auto m = r.str("mode")) c.mode = parse_run_mode(*m);
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get("workers", c.workers);
  if (const json* m = r.raw("model")) {
    ObjectReader mr(*m, "model");
    mr.get("queue_pair_iops", c.queue_pair_iops);
    mr.get("shared_bandwidth_Bps", c.link.shared_bandwidth_Bps);
    mr.get("command_overhead_bytes", c.link.command_overhead_bytes);
    mr.finish();
  }
  if (const json* w = r.raw("workload")) read_workload(*w, c.workload);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

uint32_t effective_workers(const RunConfig& cfg) {
  if (cfg.mode == RunMode::model && cfg.workload.kind != WorkloadKind::randbench) return 1;
  uint32_t w = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BAMSIM_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (!*env || *end || cap == 0) throw ConfigError("BAMSIM_THREADS must be a positive integer");
    w = static_cast<uint32_t>(std::min<unsigned long>(w, cap));
  }
  return w;
}

namespace {

ModelTopology topology_of(const RunConfig& c) {
  ModelTopology t;
  t.profile = c.device_profile();
  t.devices = c.devices;
  t.queues_per_device = c.num_queues;
  t.queue_depth = c.queue_depth;
  t.link = c.link;
  t.queue_pair_iops = c.queue_pair_iops;
  return t;
}

// Blocks each device needs for arrays of the given byte sizes.
uint64_t capacity_for(const RunConfig& c, const std::vector<uint64_t>& array_bytes) {
  const uint64_t bpl = c.line_size / kBlockSize;
  uint64_t lines = 0;
  for (uint64_t b : array_bytes) lines += (b + c.line_size - 1) / c.line_size;
  const uint64_t spread = c.replicate ? 1 : c.devices;
  // Per array, one device may get one extra line; plus the reserved first line.
  return ((lines + spread - 1) / spread + array_bytes.size() + 1) * bpl;
}

SystemConfig system_config(const RunConfig& c, uint64_t capacity_blocks) {
  SystemConfig s;
  s.profile = c.device_profile();
  s.num_devices = c.devices;
  s.capacity_blocks = c.capacity_blocks ? c.capacity_blocks : capacity_blocks;
  s.num_queues = c.num_queues;
  s.queue_depth = c.queue_depth;
  s.cache.line_size = c.line_size;
  s.cache.num_slots = c.cache_bytes / c.line_size;
  s.fence = c.fence;
  s.visibility = c.visibility;
  s.visibility_delay_us = c.visibility_delay_us;
  s.replicate = c.replicate;
  s.link = c.link;
  s.queue_pair_iops = c.queue_pair_iops;
  s.model_threads = c.threads;
  return s;
}

std::vector<uint64_t> pick_sources(uint64_t nodes, uint32_t count, uint64_t seed) {
  std::vector<uint64_t> out;
  uint64_t x = seed;
  for (uint32_t i = 0; i < count; ++i) {
    x += 0x9E3779B97F4A7C15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    out.push_back((z ^ (z >> 31)) % nodes);
  }
  return out;
}

}  // namespace

RunMetrics execute_run(const RunConfig& cfg) {
  cfg.validate();
  const uint32_t workers = effective_workers(cfg);
  const WorkloadConfig& w = cfg.workload;
  RunMetrics m;
  switch (w.kind) {
    case WorkloadKind::randbench: {
      RandBenchConfig rb{cfg.threads, w.access_size, w.reqs_per_thread, w.op, w.random};
      if (cfg.mode == RunMode::model) {
        m = run_randbench(rb, topology_of(cfg), RunMode::model, cfg.seed);
      } else {
        System sys(system_config(cfg, 1 << 16));
        m = run_randbench(rb, topology_of(cfg), RunMode::stress, cfg.seed, &sys, workers);
      }
      break;
    }
    case WorkloadKind::bfs:
    case WorkloadKind::cc: {
      const CsrGraph g = w.graph.path.empty()
                             ? gen_graph(w.graph.kind, w.graph.nodes, w.graph.avg_degree, w.graph.seed, !w.graph.directed)
                             : load_graph(w.graph.path);
      if (w.kind == WorkloadKind::cc && w.graph.directed) throw ConfigError("cc needs an undirected graph");
      System sys(system_config(cfg, capacity_for(cfg, {(g.num_nodes + 1) * 8, std::max<uint64_t>(g.num_edges, 1) * 8})));
      DeviceGraph dg = load_graph_to_system(sys, g);
      if (w.kind == WorkloadKind::bfs) {
        const auto sources = pick_sources(g.num_nodes, w.sources, cfg.seed);
        m = run_bfs(sys, dg, sources, workers, cfg.mode, cfg.seed).metrics;
      } else {
        m = run_cc(sys, dg, workers, w.graph.directed, cfg.mode, cfg.seed).metrics;
      }
      break;
    }
    case WorkloadKind::analytics: {
      const ColumnarDataset ds = w.dataset.path.empty() ? gen_dataset(w.dataset.spec) : load_dataset(w.dataset.path);
      System sys(system_config(cfg, capacity_for(cfg, std::vector<uint64_t>(6, ds.num_rows * 8))));
      DeviceDataset dd = load_dataset_to_system(sys, ds);
      m = run_analytics(sys, dd, w.level, w.access, workers, cfg.mode, cfg.seed).metrics;
      break;
    }
    case WorkloadKind::vecadd: {
      System sys(system_config(cfg, capacity_for(cfg, std::vector<uint64_t>(3, w.n * 8))));
      const VecAddResult r = run_vecadd(sys, w.n, w.access, workers, cfg.seed, cfg.mode);
      if (r.mismatches) throw IoError("vecadd: " + std::to_string(r.mismatches) + " output elements wrong");
      m = r.metrics;
      break;
    }
  }
  if (cfg.mode == RunMode::model) m.wall_seconds = 0;
  return m;
}

std::vector<SweepPoint> run_sweep(const RunConfig& base, std::string_view knob, const std::vector<uint64_t>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (knob != "num_queues" && knob != "cache_bytes") throw ConfigError("sweep knob must be num_queues or cache_bytes");
  std::vector<SweepPoint> out;
  for (uint64_t v : values) {
    RunConfig c = base;
    if (knob == "num_queues") {
      if (v < c.devices) throw ConfigError("num_queues sweep values must be at least the device count");
      c.num_queues = static_cast<uint32_t>(v / c.devices);
    } else {
      c.cache_bytes = v;
    }
    SweepPoint p;
    p.value = v;
    p.metrics = execute_run(c);
    out.push_back(std::move(p));
  }
  const double baseline = out.front().metrics.modeled_seconds;
  for (auto& p : out) p.relative_performance = p.metrics.modeled_seconds > 0 ? baseline / p.metrics.modeled_seconds : 0;
  return out;
}

}  // namespace bamsim
