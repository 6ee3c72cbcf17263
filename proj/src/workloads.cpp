#include "bamsim/workloads.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <numeric>
#include <string>

#include "bamsim/parallel.hpp"

namespace bamsim {

namespace {

using WallClock = std::chrono::steady_clock;

double seconds_since(WallClock::time_point t0) {
  return std::chrono::duration<double>(WallClock::now() - t0).count();
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

bool atomic_min(std::atomic<uint64_t>& a, uint64_t v) {
  uint64_t cur = a.load(std::memory_order_relaxed);
  while (v < cur) {
    if (a.compare_exchange_weak(cur, v, std::memory_order_relaxed)) return true;
  }
  return false;
}

void check_ok(Status s, const char* what) {
  if (s != Status::ok) throw IoError(std::string(what) + ": device reported an error");
}

}  // namespace

RunMode parse_run_mode(std::string_view s) {
  if (s == "stress") return RunMode::stress;
  if (s == "model") return RunMode::model;
  throw ConfigError("unknown mode '" + std::string(s) + "' (stress|model)");
}

const char* to_string(RunMode m) { return m == RunMode::stress ? "stress" : "model"; }

AccessMode parse_access_mode(std::string_view s) {
  if (s == "tiling") return AccessMode::tiling;
  if (s == "ondemand") return AccessMode::ondemand;
  throw ConfigError("unknown access mode '" + std::string(s) + "' (tiling|ondemand)");
}

const char* to_string(AccessMode m) { return m == AccessMode::tiling ? "tiling" : "ondemand"; }

RunMetrics base_metrics(const System& sys, std::string_view workload, RunMode mode, const SystemCounters& delta,
                        uint64_t seed) {
  const SystemConfig& c = sys.config();
  RunMetrics m;
  m.workload = std::string(workload);
  m.mode = to_string(mode);
  m.devices = c.num_devices;
  m.queues = c.num_queues;
  m.depth = c.queue_depth;
  m.line_size = c.cache.line_size;
  m.cache_bytes = c.cache.capacity_bytes();
  m.threads = c.model_threads;
  m.io_commands = delta.io_commands;
  m.bytes_transferred = delta.bytes_transferred;
  m.hits = delta.hits;
  m.misses = delta.misses;
  m.doorbell_rings = delta.doorbell_rings;
  m.extra_fence_reads = delta.extra_fence_reads;
  m.seed = seed;
  return m;
}

double modeled_serial_seconds(const System& sys, uint64_t reads, uint64_t writes) {
  const ModelTopology topo = sys.topology();
  const uint64_t ls = sys.config().cache.line_size;
  const uint64_t inflight = sys.config().model_threads;
  return phase_seconds(topo, Opcode::read, ls, reads, inflight) +
         phase_seconds(topo, Opcode::write, ls, writes, inflight);
}

namespace {

void finish_model(RunMetrics& m, double seconds) {
  m.modeled_seconds = seconds;
  m.modeled_iops = seconds > 0 ? static_cast<double>(m.io_commands) / seconds : 0.0;
  m.finalize();
}

}  // namespace

// ---- randbench --------------------------------------------------------------

RunMetrics run_randbench(const RandBenchConfig& cfg, const ModelTopology& topo, RunMode mode, uint64_t seed,
                         System* sys, uint32_t workers) {
  if (cfg.access_size == 0 || cfg.access_size % kBlockSize != 0) {
    throw ConfigError("access size must be a positive multiple of " + std::to_string(kBlockSize));
  }
  const RandBenchModelResult model =
      simulate_randbench(topo, cfg.op, cfg.access_size, cfg.threads, cfg.reqs_per_thread);
  RunMetrics m;
  m.workload = cfg.op == Opcode::read ? "randbench-read" : "randbench-write";
  m.mode = to_string(mode);
  m.devices = topo.devices;
  m.queues = topo.queues_per_device;
  m.depth = topo.queue_depth;
  m.threads = cfg.threads;
  m.io_commands = model.requests;
  m.bytes_transferred = model.requests * cfg.access_size;
  m.bytes_used = m.bytes_transferred;
  m.modeled_iops = model.iops;
  m.modeled_seconds = model.seconds;
  m.seed = seed;
  if (mode == RunMode::stress) {
    if (!sys) throw ConfigError("stress randbench needs a system");
    if (sys->config().num_devices != topo.devices) throw ConfigError("randbench topology does not match the system");
    const uint32_t blocks = cfg.access_size / kBlockSize;
    const uint64_t cap = sys->config().capacity_blocks;
    if (cap < blocks) throw ConfigError("access size exceeds device capacity");
    const uint32_t nw = static_cast<uint32_t>(std::min<uint64_t>(std::max<uint32_t>(workers, 1), cfg.threads));
    const SystemCounters before = sys->counters();
    const auto t0 = WallClock::now();
    const uint64_t span_blocks = cap - blocks + 1;
    parallel_for(nw, cfg.threads, [&](uint64_t t, uint32_t w) {
      const uint64_t buf = sys->staging_slice(w, nw, cfg.access_size);
      uint64_t state = splitmix64(seed ^ (t * 0x9E3779B97F4A7C15ull));
      for (uint64_t r = 0; r < cfg.reqs_per_thread; ++r) {
        const uint64_t k = t * cfg.reqs_per_thread + r;
        IoCommand cmd;
        cmd.opcode = cfg.op;
        cmd.block_count = blocks;
        cmd.buffer_offset = buf;
        if (cfg.random) {
          state = splitmix64(state);
          cmd.lba = state % span_blocks;
        } else {
          cmd.lba = (k / topo.devices * blocks) % span_blocks;
        }
        check_ok(sys->io().submit(static_cast<uint32_t>(k % topo.devices), cmd).status, "randbench");
      }
    });
    m.wall_seconds = seconds_since(t0);
    const SystemCounters d = sys->counters() - before;
    m.doorbell_rings = d.doorbell_rings;
    m.extra_fence_reads = d.extra_fence_reads;
    m.line_size = sys->config().cache.line_size;
    m.cache_bytes = sys->config().cache.capacity_bytes();
  }
  m.finalize();
  return m;
}

// ---- graphs -----------------------------------------------------------------

DeviceGraph load_graph_to_system(System& sys, const CsrGraph& g) {
  g.validate();
  DeviceGraph d;
  d.nodes = g.num_nodes;
  d.edges = g.num_edges;
  d.offsets = std::make_unique<Array<uint64_t>>(sys.load_array("row_offsets", g.row_offsets), sys.cache());
  // Edge-free graphs still get a one-element column array.
  const std::vector<uint64_t> cols = g.col_indices.empty() ? std::vector<uint64_t>{0} : g.col_indices;
  d.cols = std::make_unique<Array<uint64_t>>(sys.load_array("col_indices", cols), sys.cache());
  return d;
}

namespace {

// Reads v's neighbor list through the arrays, a warp-group at a time.
template <typename Fn>
uint64_t scan_neighbors(DeviceGraph& g, uint64_t v, Fn&& fn) {
  const uint64_t idx[2] = {v, v + 1};
  uint64_t off[2];
  g.offsets->read_group(idx, off);
  uint64_t ids[kWarpWidth];
  uint64_t nb[kWarpWidth];
  for (uint64_t e = off[0]; e < off[1]; e += kWarpWidth) {
    const size_t n = static_cast<size_t>(std::min<uint64_t>(kWarpWidth, off[1] - e));
    for (size_t k = 0; k < n; ++k) ids[k] = e + k;
    g.cols->read_group(std::span<const uint64_t>(ids, n), std::span<uint64_t>(nb, n));
    for (size_t k = 0; k < n; ++k) fn(nb[k]);
  }
  return 16 + 8 * (off[1] - off[0]);
}

}  // namespace

BfsResult run_bfs(System& sys, DeviceGraph& g, std::span<const uint64_t> sources, uint32_t workers, RunMode mode,
                  uint64_t seed) {
  workers = std::max<uint32_t>(workers, 1);
  const SystemCounters before = sys.counters();
  const auto t0 = WallClock::now();
  std::atomic<uint64_t> used{0};
  BfsResult res;
  for (uint64_t src : sources) {
    if (src >= g.nodes) throw RangeError("bfs source out of range");
    std::vector<std::atomic<uint64_t>> dist(g.nodes);
    for (auto& d : dist) d.store(kUnreachable, std::memory_order_relaxed);
    dist[src].store(0);
    std::vector<uint64_t> frontier{src};
    uint64_t level = 0;
    while (!frontier.empty()) {
      std::vector<std::vector<uint64_t>> next(workers);
      parallel_for(workers, frontier.size(), [&](uint64_t i, uint32_t w) {
        const uint64_t bytes = scan_neighbors(g, frontier[i], [&](uint64_t u) {
          uint64_t expected = kUnreachable;
          if (dist[u].compare_exchange_strong(expected, level + 1, std::memory_order_relaxed)) next[w].push_back(u);
        });
        used.fetch_add(bytes, std::memory_order_relaxed);
      });
      frontier.clear();
      for (auto& n : next) frontier.insert(frontier.end(), n.begin(), n.end());
      std::sort(frontier.begin(), frontier.end());
      ++level;
    }
    std::vector<uint64_t> out(g.nodes);
    for (uint64_t v = 0; v < g.nodes; ++v) out[v] = dist[v].load(std::memory_order_relaxed);
    res.distances.push_back(std::move(out));
  }
  const double wall = seconds_since(t0);
  const SystemCounters d = sys.counters() - before;
  res.metrics = base_metrics(sys, "bfs", mode, d, seed);
  res.metrics.bytes_used = used.load();
  res.metrics.wall_seconds = wall;
  finish_model(res.metrics, modeled_serial_seconds(sys, d.reads, d.writes));
  return res;
}

CcResult run_cc(System& sys, DeviceGraph& g, uint32_t workers, bool directed, RunMode mode, uint64_t seed) {
  if (directed) throw ConfigError("connected components needs an undirected graph");
  workers = std::max<uint32_t>(workers, 1);
  const SystemCounters before = sys.counters();
  const auto t0 = WallClock::now();
  std::atomic<uint64_t> used{0};
  std::vector<std::atomic<uint64_t>> labels(g.nodes);
  for (uint64_t v = 0; v < g.nodes; ++v) labels[v].store(v, std::memory_order_relaxed);
  bool changed = true;
  while (changed) {
    std::atomic<bool> any{false};
    parallel_for(workers, g.nodes, [&](uint64_t v, uint32_t) {
      std::vector<uint64_t> nbrs;
      uint64_t m = labels[v].load(std::memory_order_relaxed);
      used.fetch_add(scan_neighbors(g, v, [&](uint64_t u) {
                       nbrs.push_back(u);
                       m = std::min(m, labels[u].load(std::memory_order_relaxed));
                     }),
                     std::memory_order_relaxed);
      bool moved = atomic_min(labels[v], m);
      for (uint64_t u : nbrs) moved |= atomic_min(labels[u], m);
      if (moved) any.store(true, std::memory_order_relaxed);
    });
    changed = any.load();
  }
  CcResult res;
  res.labels.resize(g.nodes);
  for (uint64_t v = 0; v < g.nodes; ++v) {
    res.labels[v] = labels[v].load();
    res.components += res.labels[v] == v;
  }
  const double wall = seconds_since(t0);
  const SystemCounters d = sys.counters() - before;
  res.metrics = base_metrics(sys, "cc", mode, d, seed);
  res.metrics.bytes_used = used.load();
  res.metrics.wall_seconds = wall;
  finish_model(res.metrics, modeled_serial_seconds(sys, d.reads, d.writes));
  return res;
}

std::vector<uint64_t> reference_bfs(const CsrGraph& g, uint64_t source) {
  std::vector<uint64_t> dist(g.num_nodes, kUnreachable);
  std::vector<uint64_t> queue{source};
  dist[source] = 0;
  for (size_t h = 0; h < queue.size(); ++h) {
    const uint64_t v = queue[h];
    for (uint64_t e = g.row_offsets[v]; e < g.row_offsets[v + 1]; ++e) {
      const uint64_t u = g.col_indices[e];
      if (dist[u] == kUnreachable) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

std::vector<uint64_t> reference_cc(const CsrGraph& g) {
  std::vector<uint64_t> parent(g.num_nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](uint64_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (uint64_t v = 0; v < g.num_nodes; ++v) {
    for (uint64_t e = g.row_offsets[v]; e < g.row_offsets[v + 1]; ++e) {
      const uint64_t a = find(v), b = find(g.col_indices[e]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<uint64_t> labels(g.num_nodes);
  for (uint64_t v = 0; v < g.num_nodes; ++v) labels[v] = find(v);
  return labels;
}

// ---- analytics --------------------------------------------------------------

DeviceDataset load_dataset_to_system(System& sys, const ColumnarDataset& ds) {
  DeviceDataset d;
  d.rows = ds.num_rows;
  for (size_t c = 0; c < ds.columns.size(); ++c) {
    d.columns.push_back(std::make_unique<Array<uint64_t>>(sys.load_array(kColumnNames[c], ds.columns[c]), sys.cache()));
  }
  return d;
}

AnalyticsResult run_analytics(System& sys, DeviceDataset& ds, uint32_t level, AccessMode mode, uint32_t workers,
                              RunMode run_mode, uint64_t seed) {
  if (level > 5) throw ConfigError("query level must be 0..5");
  workers = std::max<uint32_t>(workers, 1);
  const uint32_t ls = sys.config().cache.line_size;
  const uint64_t epl = ls / 8;
  const uint64_t lines = (ds.rows + epl - 1) / epl;
  std::atomic<uint64_t> answer{0}, qualifying{0};
  const SystemCounters before = sys.counters();
  const auto t0 = WallClock::now();

  if (mode == AccessMode::ondemand) {
    parallel_for(workers, lines, [&](uint64_t line, uint32_t) {
      const uint64_t first = line * epl;
      const uint64_t last = std::min(ds.rows, first + epl);
      uint64_t sum = 0, q = 0;
      LineRef ref = ds.columns[0]->acquire(first);
      const uint32_t base = ds.columns[0]->offset_of(first);
      for (uint64_t r = first; r < last; ++r) {
        if (ref.load<uint64_t>(base + static_cast<uint32_t>((r - first) * 8)) < kDistanceThreshold) continue;
        ++q;
        if (level == 0) ++sum;
        for (uint32_t k = 1; k <= level; ++k) sum += ds.columns[k]->read(r);
      }
      answer.fetch_add(sum, std::memory_order_relaxed);
      qualifying.fetch_add(q, std::memory_order_relaxed);
    });
  } else {
    const uint32_t cols = level + 1;
    const uint64_t per_worker = sys.config().staging_bytes / workers;
    const uint64_t tile_lines = std::clamp<uint64_t>(per_worker / (uint64_t{cols} * ls), 1, 64);
    const uint64_t tiles = (lines + tile_lines - 1) / tile_lines;
    parallel_for(workers, tiles, [&](uint64_t t, uint32_t w) {
      const uint64_t buf = sys.staging_slice(w, workers, tile_lines * cols * ls);
      const uint64_t l0 = t * tile_lines;
      const uint64_t l1 = std::min(lines, l0 + tile_lines);
      for (uint32_t c = 0; c < cols; ++c) {
        for (uint64_t li = l0; li < l1; ++li) {
          check_ok(sys.io().read_line(ds.columns[c]->layout().line(li), buf + (c * tile_lines + li - l0) * ls, ls),
                   "tile load");
        }
      }
      auto value = [&](uint32_t c, uint64_t r) {
        uint64_t v;
        std::memcpy(&v, sys.memory().data(buf + c * tile_lines * ls + (r - l0 * epl) * 8), 8);
        return v;
      };
      uint64_t sum = 0, q = 0;
      for (uint64_t r = l0 * epl; r < std::min(ds.rows, l1 * epl); ++r) {
        if (value(0, r) < kDistanceThreshold) continue;
        ++q;
        if (level == 0) ++sum;
        for (uint32_t k = 1; k <= level; ++k) sum += value(k, r);
      }
      answer.fetch_add(sum, std::memory_order_relaxed);
      qualifying.fetch_add(q, std::memory_order_relaxed);
    });
  }

  const double wall = seconds_since(t0);
  const SystemCounters d = sys.counters() - before;
  AnalyticsResult res;
  res.answer = answer.load();
  res.qualifying = qualifying.load();
  res.metrics = base_metrics(sys, "analytics-q" + std::to_string(level) + "-" + to_string(mode), run_mode, d, seed);
  res.metrics.bytes_used = ds.rows * 8 + res.qualifying * level * 8;
  res.metrics.wall_seconds = wall;
  finish_model(res.metrics, modeled_serial_seconds(sys, d.reads, d.writes));
  return res;
}

// ---- vectorAdd --------------------------------------------------------------

uint64_t vecadd_input(uint64_t seed, uint64_t which, uint64_t i) {
  return splitmix64(splitmix64(seed * 2 + which) ^ i) >> 1;
}

VecAddResult run_vecadd(System& sys, uint64_t n, AccessMode mode, uint32_t workers, uint64_t seed, RunMode run_mode) {
  if (n == 0) throw ConfigError("vecadd needs n > 0");
  workers = std::max<uint32_t>(workers, 1);
  std::vector<uint64_t> a(n), b(n);
  for (uint64_t i = 0; i < n; ++i) {
    a[i] = vecadd_input(seed, 0, i);
    b[i] = vecadd_input(seed, 1, i);
  }
  Array<uint64_t> A(sys.load_array("a", a), sys.cache());
  Array<uint64_t> B(sys.load_array("b", b), sys.cache());
  VecAddResult res;
  res.out_spec = sys.place_array("out", 8, n);
  Array<uint64_t> Out(res.out_spec, sys.cache());

  const uint32_t ls = sys.config().cache.line_size;
  const uint64_t epl = ls / 8;
  const uint64_t lines = (n + epl - 1) / epl;
  const SystemCounters before = sys.counters();
  const auto t0 = WallClock::now();

  if (mode == AccessMode::ondemand) {
    // One warp-group per output line. The output line stays pinned until it is
    // complete so it is written back exactly once.
    parallel_for(workers, lines, [&](uint64_t line, uint32_t) {
      const uint64_t first = line * epl;
      const uint64_t last = std::min(n, first + epl);
      LineRef out_line = Out.acquire(first);
      const uint32_t base = Out.offset_of(first);
      uint64_t idx[kWarpWidth], va[kWarpWidth], vb[kWarpWidth];
      for (uint64_t i = first; i < last; i += kWarpWidth) {
        const size_t k = static_cast<size_t>(std::min<uint64_t>(kWarpWidth, last - i));
        for (size_t j = 0; j < k; ++j) idx[j] = i + j;
        const std::span<const uint64_t> ids(idx, k);
        A.read_group(ids, std::span<uint64_t>(va, k));
        B.read_group(ids, std::span<uint64_t>(vb, k));
        for (size_t j = 0; j < k; ++j) {
          out_line.store<uint64_t>(base + static_cast<uint32_t>((i + j - first) * 8), va[j] + vb[j]);
        }
      }
    });
    sys.cache().flush_all();
  } else {
    const uint64_t chunk = std::clamp<uint64_t>(sys.config().staging_bytes / workers / (3ull * ls), 1, 16);
    const uint64_t tasks = (lines + chunk - 1) / chunk;
    parallel_for(workers, tasks, [&](uint64_t t, uint32_t w) {
      const uint64_t buf = sys.staging_slice(w, workers, 3 * chunk * ls);
      const uint64_t l0 = t * chunk;
      const uint64_t l1 = std::min(lines, l0 + chunk);
      for (uint64_t li = l0; li < l1; ++li) {
        check_ok(sys.io().read_line(A.layout().line(li), buf + (li - l0) * ls, ls), "tile load");
        check_ok(sys.io().read_line(B.layout().line(li), buf + (chunk + li - l0) * ls, ls), "tile load");
      }
      const uint64_t rows = std::min(n, l1 * epl) - l0 * epl;
      for (uint64_t r = 0; r < rows; ++r) {
        uint64_t x, y;
        std::memcpy(&x, sys.memory().data(buf + r * 8), 8);
        std::memcpy(&y, sys.memory().data(buf + chunk * ls + r * 8), 8);
        const uint64_t z = x + y;
        std::memcpy(sys.memory().data(buf + 2 * chunk * ls + r * 8), &z, 8);
      }
      for (uint64_t li = l0; li < l1; ++li) {
        check_ok(sys.io().write_line(Out.layout().line(li), buf + (2 * chunk + li - l0) * ls, ls), "tile store");
      }
    });
  }

  const double wall = seconds_since(t0);
  const SystemCounters d = sys.counters() - before;

  std::vector<uint64_t> out(n);
  load_array(sys.devices(), res.out_spec, std::as_writable_bytes(std::span<uint64_t>(out)));
  for (uint64_t i = 0; i < n; ++i) res.mismatches += out[i] != a[i] + b[i];

  res.metrics = base_metrics(sys, std::string("vecadd-") + to_string(mode), run_mode, d, seed);
  res.metrics.bytes_used = 3 * n * 8;
  res.metrics.wall_seconds = wall;
  double seconds;
  if (mode == AccessMode::ondemand) {
    // Read misses and write-backs do not overlap.
    seconds = modeled_serial_seconds(sys, d.reads, d.writes);
  } else {
    // Five double-buffered tiles: reads of tile t+1 overlap write-back of tile t.
    const double r = modeled_serial_seconds(sys, d.reads, 0) / kVecAddTiles;
    const double w = modeled_serial_seconds(sys, 0, d.writes) / kVecAddTiles;
    seconds = r + (kVecAddTiles - 1) * std::max(r, w) + w;
  }
  finish_model(res.metrics, seconds);
  return res;
}

}  // namespace bamsim
