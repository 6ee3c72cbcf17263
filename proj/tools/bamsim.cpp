// bamsim command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bamsim/dataset.hpp"
#include "bamsim/graph.hpp"
#include "bamsim/run_config.hpp"

using namespace bamsim;

namespace {

struct Overrides {
  std::string config;
  std::optional<uint64_t> threads;
  std::optional<uint32_t> queue_depth;
  std::optional<uint32_t> num_queues;
  std::optional<uint32_t> n_ctrls;
  std::optional<uint32_t> page_size;
  std::optional<bool> random;
  std::optional<std::string> mode;
  std::optional<uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<std::string> fence;
  std::optional<std::string> visibility;
  std::optional<double> delay_us;
  std::optional<uint64_t> cache_bytes;
  std::optional<uint32_t> workers;
  std::optional<bool> replicate;
  std::string out;
  // workload specific
  std::optional<uint64_t> reqs;
  std::optional<std::string> op;
  std::optional<std::string> graph;
  std::optional<std::string> graph_kind;
  std::optional<uint64_t> nodes;
  std::optional<uint32_t> degree;
  std::optional<uint64_t> graph_seed;
  std::optional<uint32_t> sources;
  std::optional<std::string> dataset;
  std::optional<uint64_t> rows;
  std::optional<double> selectivity;
  std::optional<uint32_t> cluster;
  std::optional<uint32_t> level;
  std::optional<std::string> access;
  std::optional<uint64_t> n;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run config");
  sub->add_option("--threads", o.threads, "logical threads");
  sub->add_option("--queue_depth", o.queue_depth, "entries per queue");
  sub->add_option("--num_queues", o.num_queues, "queue pairs per device");
  sub->add_option("--n_ctrls", o.n_ctrls, "number of devices");
  sub->add_option("--page_size", o.page_size, "I/O size (randbench) or cache line size");
  sub->add_option("--random", o.random, "random (true) or sequential (false) addresses");
  sub->add_option("--mode", o.mode, "stress or model");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--profile", o.profile, "device profile name");
  sub->add_option("--fence", o.fence, "off, naive or coalesced");
  sub->add_option("--visibility", o.visibility, "strict or relaxed");
  sub->add_option("--delay_us", o.delay_us, "relaxed visibility delay");
  sub->add_option("--cache_bytes", o.cache_bytes, "cache capacity");
  sub->add_option("--workers", o.workers, "OS worker threads");
  sub->add_option("--replicate", o.replicate, "mirror data on every device");
  sub->add_option("--out", o.out, "metrics CSV path (default: stdout)");
}

void add_graph_opts(CLI::App* sub, Overrides& o) {
  sub->add_option("--graph", o.graph, "CSR graph file");
  sub->add_option("--kind", o.graph_kind, "uniform or kron (generated graph)");
  sub->add_option("--nodes", o.nodes, "generated graph nodes");
  sub->add_option("--degree", o.degree, "generated graph average degree");
  sub->add_option("--graph_seed", o.graph_seed, "generated graph seed");
  sub->add_option("--sources", o.sources, "BFS sources");
}

void add_dataset_opts(CLI::App* sub, Overrides& o) {
  sub->add_option("--dataset", o.dataset, "dataset file");
  sub->add_option("--rows", o.rows, "generated rows");
  sub->add_option("--selectivity", o.selectivity, "fraction of qualifying rows");
  sub->add_option("--cluster", o.cluster, "qualifying rows per cluster");
  sub->add_option("--level", o.level, "query level 0..5");
  sub->add_option("--access", o.access, "tiling or ondemand");
}

RunConfig build_config(const Overrides& o, WorkloadKind kind) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.config.empty() && c.workload.kind != kind) {
    throw ConfigError(std::string("config describes a '") + to_string(c.workload.kind) + "' run, not '" +
                      to_string(kind) + "'");
  }
  c.workload.kind = kind;
  if (o.threads) c.threads = *o.threads;
  if (o.queue_depth) c.queue_depth = *o.queue_depth;
  if (o.num_queues) c.num_queues = *o.num_queues;
  if (o.n_ctrls) c.devices = *o.n_ctrls;
  if (o.page_size) {
    if (kind == WorkloadKind::randbench) {
      c.workload.access_size = *o.page_size;
    } else {
      c.line_size = *o.page_size;
    }
  }
  if (o.random) c.workload.random = *o.random;
  if (o.mode) c.mode = parse_run_mode(*o.mode);
  if (o.seed) c.seed = *o.seed;
  if (o.profile) {
    builtin_profile(*o.profile);
    c.profile = *o.profile;
    c.custom_profile.reset();
  }
  if (o.fence) c.fence = parse_fence_mode(*o.fence);
  if (o.visibility) {
    if (*o.visibility == "strict") {
      c.visibility = VisibilityMode::strict;
    } else if (*o.visibility == "relaxed") {
      c.visibility = VisibilityMode::relaxed;
    } else {
      throw ConfigError("--visibility must be strict or relaxed");
    }
  }
  if (o.delay_us) c.visibility_delay_us = *o.delay_us;
  if (o.cache_bytes) c.cache_bytes = *o.cache_bytes;
  if (o.workers) c.workers = *o.workers;
  if (o.replicate) c.replicate = *o.replicate;
  WorkloadConfig& w = c.workload;
  if (o.reqs) w.reqs_per_thread = *o.reqs;
  if (o.op) {
    if (*o.op == "read") {
      w.op = Opcode::read;
    } else if (*o.op == "write") {
      w.op = Opcode::write;
    } else {
      throw ConfigError("--op must be read or write");
    }
  }
  if (o.graph) w.graph.path = *o.graph;
  if (o.graph_kind) w.graph.kind = parse_graph_kind(*o.graph_kind);
  if (o.nodes) w.graph.nodes = *o.nodes;
  if (o.degree) w.graph.avg_degree = *o.degree;
  if (o.graph_seed) w.graph.seed = *o.graph_seed;
  if (o.sources) w.sources = *o.sources;
  if (o.dataset) w.dataset.path = *o.dataset;
  if (o.rows) w.dataset.spec.rows = *o.rows;
  if (o.selectivity) w.dataset.spec.selectivity = *o.selectivity;
  if (o.cluster) w.dataset.spec.cluster = *o.cluster;
  if (o.level) w.level = *o.level;
  if (o.access) w.access = parse_access_mode(*o.access);
  if (o.n) w.n = *o.n;
  c.validate();
  return c;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

void summarize(const RunMetrics& m) {
  std::fprintf(stderr, "%s [%s]: %llu commands, amplification %.4g, modeled %.6g IOPS over %.6g s", m.workload.c_str(),
               m.mode.c_str(), static_cast<unsigned long long>(m.io_commands), m.amplification, m.modeled_iops,
               m.modeled_seconds);
  if (m.wall_seconds > 0) std::fprintf(stderr, ", wall %.3f s", m.wall_seconds);
  std::fprintf(stderr, "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bamsim: accelerator-initiated storage simulator"};
  app.require_subcommand(1);

  Overrides o;
  struct Sub {
    CLI::App* app;
    WorkloadKind kind;
  };
  std::vector<Sub> runs;

  auto* rb = app.add_subcommand("randbench", "random block I/O microbenchmark");
  add_common(rb, o);
  rb->add_option("--reqs", o.reqs, "requests per thread");
  rb->add_option("--op", o.op, "read or write");
  runs.push_back({rb, WorkloadKind::randbench});

  auto* bfs = app.add_subcommand("bfs", "breadth-first search over a CSR graph");
  add_common(bfs, o);
  add_graph_opts(bfs, o);
  runs.push_back({bfs, WorkloadKind::bfs});

  auto* cc = app.add_subcommand("cc", "connected components over an undirected CSR graph");
  add_common(cc, o);
  add_graph_opts(cc, o);
  runs.push_back({cc, WorkloadKind::cc});

  auto* an = app.add_subcommand("analytics", "columnar queries Q0-Q5");
  add_common(an, o);
  add_dataset_opts(an, o);
  runs.push_back({an, WorkloadKind::analytics});

  auto* va = app.add_subcommand("vecadd", "out[i] = a[i] + b[i]");
  add_common(va, o);
  va->add_option("--n", o.n, "elements");
  va->add_option("--access", o.access, "tiling or ondemand");
  runs.push_back({va, WorkloadKind::vecadd});

  std::string gg_kind = "uniform", gg_out;
  uint64_t gg_nodes = 100'000, gg_seed = 1;
  uint32_t gg_degree = 20;
  bool gg_directed = false;
  auto* gg = app.add_subcommand("gen-graph", "write a synthetic CSR graph");
  gg->add_option("--kind", gg_kind, "uniform or kron");
  gg->add_option("--nodes", gg_nodes, "nodes");
  gg->add_option("--degree", gg_degree, "average degree");
  gg->add_option("--seed", gg_seed, "seed");
  gg->add_flag("--directed", gg_directed, "do not mirror edges");
  gg->add_option("--out", gg_out, "output file")->required();

  DatasetSpec ds_spec;
  std::string ds_out;
  auto* gd = app.add_subcommand("gen-dataset", "write a synthetic columnar dataset");
  gd->add_option("--rows", ds_spec.rows, "rows");
  gd->add_option("--selectivity", ds_spec.selectivity, "fraction of qualifying rows");
  gd->add_option("--cluster", ds_spec.cluster, "qualifying rows per cluster");
  gd->add_option("--seed", ds_spec.seed, "seed");
  gd->add_option("--out", ds_out, "output file")->required();

  double qd_t = 0, qd_l = 0;
  auto* qd = app.add_subcommand("qd-calc", "queue depth needed for throughput T at latency L");
  qd->add_option("--t", qd_t, "ops/sec")->required();
  qd->add_option("--l", qd_l, "latency in seconds")->required();

  std::string sw_knob = "num_queues", sw_workload = "bfs", sw_metrics;
  std::vector<uint64_t> sw_values;
  auto* sw = app.add_subcommand("sweep", "relative performance across cache sizes or queue-pair counts");
  add_common(sw, o);
  add_graph_opts(sw, o);
  add_dataset_opts(sw, o);
  sw->add_option("--knob", sw_knob, "num_queues (total across devices) or cache_bytes");
  sw->add_option("--values", sw_values, "comma-separated values; the first is the baseline")
      ->delimiter(',')
      ->required();
  sw->add_option("--workload", sw_workload, "workload to sweep");
  sw->add_option("--metrics", sw_metrics, "also write full metrics CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const Sub& s : runs) {
      if (!s.app->parsed()) continue;
      const RunConfig cfg = build_config(o, s.kind);
      const RunMetrics m = execute_run(cfg);
      emit(o.out, csv_preamble() + csv_row(m));
      summarize(m);
      return 0;
    }
    if (gg->parsed()) {
      const CsrGraph g = gen_graph(parse_graph_kind(gg_kind), gg_nodes, gg_degree, gg_seed, !gg_directed);
      store_graph(g, gg_out);
      std::fprintf(stderr, "wrote %s: %llu nodes, %llu edges\n", gg_out.c_str(),
                   static_cast<unsigned long long>(g.num_nodes), static_cast<unsigned long long>(g.num_edges));
      return 0;
    }
    if (gd->parsed()) {
      const ColumnarDataset ds = gen_dataset(ds_spec);
      store_dataset(ds, ds_out);
      std::fprintf(stderr, "wrote %s: %llu rows, %zu qualifying\n", ds_out.c_str(),
                   static_cast<unsigned long long>(ds.num_rows), ds.qualifying_rows().size());
      return 0;
    }
    if (qd->parsed()) {
      std::printf("%llu\n", static_cast<unsigned long long>(littles_law_qd(qd_t, qd_l)));
      return 0;
    }
    if (sw->parsed()) {
      const RunConfig cfg = build_config(o, parse_workload_kind(sw_workload));
      const auto points = run_sweep(cfg, sw_knob, sw_values);
      std::ostringstream table, metrics;
      table << "knob,value,modeled_seconds,relative_performance\n";
      metrics << csv_preamble();
      for (const auto& p : points) {
        char buf[64];
        table << sw_knob << ',' << p.value << ',';
        std::snprintf(buf, sizeof buf, "%.9g,%.6f\n", p.metrics.modeled_seconds, p.relative_performance);
        table << buf;
        metrics << csv_row(p.metrics);
      }
      emit(o.out, table.str());
      if (!sw_metrics.empty()) emit(sw_metrics, metrics.str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "bamsim: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bamsim: %s\n", e.what());
    return 1;
  }
  return 2;
}
