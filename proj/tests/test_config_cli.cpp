#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bamsim/metrics.hpp"
#include "bamsim/run_config.hpp"

namespace bamsim {
namespace {

TEST(RunConfig, DefaultsAndFullShape) {
  const RunConfig c = parse_run_config(R"({
    "devices": {"profile": "samsung-pm1735", "count": 2, "capacity_blocks": 4096, "replicate": true},
    "queue": {"num_queues": 8, "queue_depth": 256},
    "cache": {"line_size": 8192, "capacity_bytes": 1048576},
    "fence": "coalesced",
    "visibility": {"mode": "relaxed", "delay_us": 20},
    "mode": "stress", "seed": 9, "threads": 1024, "workers": 3,
    "model": {"queue_pair_iops": 1e5, "shared_bandwidth_Bps": 1e10, "command_overhead_bytes": 64},
    "workload": {"kind": "bfs", "graph": {"kind": "kron", "nodes": 1000, "avg_degree": 4, "seed": 3}, "sources": 2}
  })");
  EXPECT_EQ(c.profile, "samsung-pm1735");
  EXPECT_EQ(c.devices, 2u);
  EXPECT_TRUE(c.replicate);
  EXPECT_EQ(c.num_queues, 8u);
  EXPECT_EQ(c.line_size, 8192u);
  EXPECT_EQ(c.fence, FenceMode::coalesced);
  EXPECT_EQ(c.visibility, VisibilityMode::relaxed);
  EXPECT_DOUBLE_EQ(c.visibility_delay_us, 20);
  EXPECT_EQ(c.mode, RunMode::stress);
  EXPECT_EQ(c.workload.kind, WorkloadKind::bfs);
  EXPECT_EQ(c.workload.graph.kind, GraphKind::kron);
  EXPECT_EQ(c.workload.sources, 2u);
  EXPECT_EQ(c.link.command_overhead_bytes, 64u);

  const RunConfig d = parse_run_config(R"({"workload": {"kind": "randbench"}})");
  EXPECT_EQ(d.mode, RunMode::model);
  EXPECT_EQ(d.queue_depth, 1024u);
  EXPECT_EQ(d.line_size, 4096u);
}

TEST(RunConfig, CustomProfileObject) {
  const RunConfig c = parse_run_config(
      R"({"devices": {"profile": {"name": "optane-p5800x", "read_latency_us": 20}}, "workload": {"kind": "randbench"}})");
  EXPECT_DOUBLE_EQ(c.device_profile().read_latency_us, 20);
  EXPECT_DOUBLE_EQ(c.device_profile().read_iops_cap_512, builtin_profile("optane-p5800x").read_iops_cap_512);
}

TEST(RunConfig, UnknownKeysRejectedEverywhere) {
  const char* bad[] = {
      R"({"workload": {"kind": "bfs"}, "colour": 1})",
      R"({"devices": {"count": 1, "speed": 3}, "workload": {"kind": "bfs"}})",
      R"({"queue": {"depth": 3}, "workload": {"kind": "bfs"}})",
      R"({"cache": {"size": 3}, "workload": {"kind": "bfs"}})",
      R"({"visibility": {"mode": "relaxed", "delay": 3}, "workload": {"kind": "bfs"}})",
      R"({"workload": {"kind": "bfs", "graph": {"edges": 3}}})",
      R"({"workload": {"kind": "analytics", "dataset": {"rowz": 3}}})",
      R"({"workload": {"kind": "vecadd", "m": 3}})",
      R"({"model": {"qp": 3}, "workload": {"kind": "bfs"}})",
  };
  for (const char* j : bad) EXPECT_THROW(parse_run_config(j), ConfigError) << j;
}

TEST(RunConfig, BadValuesRejected) {
  const char* bad[] = {
      "{not json",
      R"({"workload": {}})",
      R"({"workload": {"kind": "sort"}})",
      R"({"queue": {"queue_depth": 1000}, "workload": {"kind": "bfs"}})",
      R"({"queue": {"num_queues": -1}, "workload": {"kind": "bfs"}})",
      R"({"cache": {"line_size": 100}, "workload": {"kind": "bfs"}})",
      R"({"devices": {"profile": "floppy"}, "workload": {"kind": "bfs"}})",
      R"({"devices": {"count": 1, "replicate": true}, "workload": {"kind": "bfs"}})",
      R"({"fence": "maybe", "workload": {"kind": "bfs"}})",
      R"({"mode": "fast", "workload": {"kind": "bfs"}})",
      R"({"workload": {"kind": "analytics", "level": 6}})",
      R"({"seed": "x", "workload": {"kind": "bfs"}})",
  };
  for (const char* j : bad) EXPECT_THROW(parse_run_config(j), ConfigError) << j;
}

TEST(RunConfig, WorkerCapFromEnvironment) {
  RunConfig c = parse_run_config(R"({"mode": "stress", "workers": 8, "workload": {"kind": "bfs"}})");
  ::setenv("BAMSIM_THREADS", "3", 1);
  EXPECT_EQ(effective_workers(c), 3u);
  ::setenv("BAMSIM_THREADS", "zero", 1);
  EXPECT_THROW(effective_workers(c), ConfigError);
  ::unsetenv("BAMSIM_THREADS");
  EXPECT_EQ(effective_workers(c), 8u);
  c.mode = RunMode::model;
  EXPECT_EQ(effective_workers(c), 1u);
}

TEST(Metrics, CsvSchema) {
  RunMetrics m;
  m.workload = "x";
  m.bytes_transferred = 300;
  m.bytes_used = 100;
  m.finalize();
  EXPECT_DOUBLE_EQ(m.amplification, 3.0);
  const std::string pre = csv_preamble();
  EXPECT_EQ(pre,
            "# bamsim-metrics v1\n"
            "workload,mode,devices,queues,depth,line_size,cache_bytes,threads,io_commands,bytes_transferred,"
            "bytes_used,amplification,hits,misses,doorbell_rings,extra_fence_reads,modeled_iops,modeled_seconds,"
            "wall_seconds,seed\n");
  const std::string row = csv_row(m);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 19);
  EXPECT_EQ(row.back(), '\n');
}

TEST(ExecuteRun, ModelModeIsDeterministic) {
  RunConfig c = parse_run_config(
      R"({"workload": {"kind": "bfs", "graph": {"nodes": 3000, "avg_degree": 6}, "sources": 2}})");
  const std::string a = csv_row(execute_run(c));
  const std::string b = csv_row(execute_run(c));
  EXPECT_EQ(a, b);
}

TEST(Sweep, QueuePairDegradationAtOrBelowForty) {
  RunConfig c = parse_run_config(R"({"devices": {"count": 4},
      "workload": {"kind": "randbench", "access_size": 4096, "reqs_per_thread": 2}})");
  c.threads = 262144;
  const auto pts = run_sweep(c, "num_queues", {128, 64, 40, 8});
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_DOUBLE_EQ(pts[0].relative_performance, 1.0);
  EXPECT_GT(pts[1].relative_performance, 0.95);
  EXPECT_LT(pts[2].relative_performance, 0.95);
  EXPECT_LT(pts[3].relative_performance, pts[2].relative_performance);
  EXPECT_THROW(run_sweep(c, "colour", {1}), ConfigError);
}

// ---- CLI --------------------------------------------------------------------

struct Cli {
  int code;
  std::string out;
};

Cli run_cli(const std::string& args) {
  const std::string cmd = std::string(BAMSIM_CLI) + " " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = ::pclose(p);
  return Cli{WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

TEST(Cli, QdCalc) {
  EXPECT_EQ(run_cli("qd-calc --t 51e6 --l 11e-6").out, "561\n");
  EXPECT_EQ(run_cli("qd-calc --t 6.35e6 --l 324e-6").out, "2057\n");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("randbench --no_such_flag 1").code, 2);
  EXPECT_EQ(run_cli("randbench --mode sideways").code, 2);
  EXPECT_EQ(run_cli("randbench --queue_depth 1000").code, 2);
  EXPECT_EQ(run_cli("bfs --config /nonexistent/config.json").code, 2);
  EXPECT_EQ(run_cli("bfs --graph /nonexistent/graph.csr").code, 1);
  EXPECT_EQ(run_cli("qd-calc --t 1 --l 1").code, 0);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, RandbenchCsvWithOverrides) {
  const Cli r = run_cli("randbench --threads 4096 --n_ctrls 2 --num_queues 16 --queue_depth 64 --page_size 4096 "
                        "--random false --mode model --seed 5");
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string version, header, row;
  std::getline(in, version);
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(version, "# bamsim-metrics v1");
  EXPECT_EQ(row.rfind("randbench-read,model,2,16,64,", 0), 0u) << row;
  EXPECT_NE(row.find(",4096,"), std::string::npos);
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "5");
}

TEST(Cli, OutFileAndConfig) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string cfg = (dir / "bamsim_cli_cfg.json").string();
  const std::string out = (dir / "bamsim_cli_out.csv").string();
  std::ofstream(cfg) << R"({"workload": {"kind": "vecadd", "n": 5000, "access": "tiling"}, "mode": "stress"})";
  const Cli r = run_cli("vecadd --config " + cfg + " --out " + out);
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("vecadd-tiling,stress,", 0), 0u) << line;
  EXPECT_EQ(run_cli("bfs --config " + cfg).code, 2);
  std::filesystem::remove(cfg);
  std::filesystem::remove(out);
}

TEST(Cli, GeneratorsRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string g = (dir / "bamsim_cli_g.csr").string();
  const std::string d = (dir / "bamsim_cli_d.bin").string();
  ASSERT_EQ(run_cli("gen-graph --kind kron --nodes 2000 --degree 8 --seed 2 --out " + g).code, 0);
  ASSERT_EQ(run_cli("gen-dataset --rows 20000 --selectivity 0.01 --out " + d).code, 0);
  EXPECT_EQ(run_cli("cc --graph " + g + " --mode stress").code, 0);
  EXPECT_EQ(run_cli("analytics --dataset " + d + " --level 2 --access tiling --mode stress").code, 0);
  std::filesystem::remove(g);
  std::filesystem::remove(d);
}

TEST(Cli, SweepTable) {
  const Cli r = run_cli("sweep --workload bfs --knob cache_bytes --values 4194304,65536 --nodes 4000 --degree 8");
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "knob,value,modeled_seconds,relative_performance");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("cache_bytes,4194304,", 0), 0u);
  EXPECT_NE(line.find(",1.000000"), std::string::npos);
}

}  // namespace
}  // namespace bamsim
