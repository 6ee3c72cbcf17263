#include <gtest/gtest.h>

#include <latch>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "bamsim/array.hpp"
#include "bamsim/fence.hpp"
#include "bamsim/io_stack.hpp"
#include "bamsim/system.hpp"
#include "fake_backend.hpp"

namespace bamsim {
namespace {

ArraySpec spec8(uint64_t length, uint32_t line = 4096) { return contiguous_array("a", 8, length, 0, 0, line); }

TEST(IndexToLine, Examples) {
  const ArraySpec s = spec8(2048);
  auto l0 = index_to_line(s, 4096, 0);
  EXPECT_EQ(l0.line_index, 0u);
  EXPECT_EQ(l0.offset, 0u);
  auto l512 = index_to_line(s, 4096, 512);
  EXPECT_EQ(l512.line_index, 1u);
  EXPECT_EQ(l512.offset, 0u);
  EXPECT_EQ(l512.line.lba, 8u);
  auto l513 = index_to_line(s, 4096, 513);
  EXPECT_EQ(l513.line_index, 1u);
  EXPECT_EQ(l513.offset, 8u);
  EXPECT_THROW(index_to_line(s, 4096, 2048), RangeError);
}

TEST(IndexToLine, ExtentsMapInOrder) {
  ArraySpec s;
  s.name = "split";
  s.element_size = 8;
  s.length = 2000;
  s.extents = {{1, 64, 8}, {0, 16, 24}};  // 1 line on device 1, then 3 lines on device 0
  ArrayLayout lay(s, 4096);
  EXPECT_EQ(lay.line_count(), 4u);
  EXPECT_EQ(lay.locate(511).line, (LineId{1, 64}));
  EXPECT_EQ(lay.locate(512).line, (LineId{0, 16}));
  EXPECT_EQ(lay.locate(1999).line, (LineId{0, 32}));
}

TEST(ArrayLayout, RejectsBadShapes) {
  ArraySpec s = spec8(100);
  s.element_size = 12;
  EXPECT_THROW(ArrayLayout(s, 4096), ConfigError);
  ArraySpec t = spec8(512 * 3);
  EXPECT_THROW(ArrayLayout(t, 8192), ConfigError);  // extent not whole 8 KiB lines
  ArraySpec u = spec8(512);
  u.extents[0].block_count = 4;
  EXPECT_THROW(ArrayLayout(u, 4096), ConfigError);
  EXPECT_EQ(array_blocks(8, 513, 4096), 16u);
}

struct ArrayRig {
  explicit ArrayRig(uint64_t slots = 64, uint32_t line = 4096) : mem(slots * line + (1 << 16)), backend(mem) {
    CacheConfig c;
    c.num_slots = slots;
    c.line_size = line;
    cache = std::make_unique<Cache>(c, mem, backend);
  }
  DeviceMemory mem;
  testing::FakeBackend backend;
  std::unique_ptr<Cache> cache;
};

TEST(Array, ReadGroupOneProbePerLine) {
  ArrayRig rig;
  Array<uint64_t> a(spec8(4096), *rig.cache);
  std::vector<uint64_t> idx(32), out(32);
  std::iota(idx.begin(), idx.end(), 64);
  a.read_group(idx, out);
  EXPECT_EQ(a.probes(), 1u);
  EXPECT_EQ(rig.cache->stats().probes, 1u);
  for (uint64_t v : out) EXPECT_EQ(v, testing::line_stamp(LineId{0, 0}));
  for (uint64_t k = 0; k < 32; ++k) idx[k] = k * 512 % 4096;
  a.read_group(idx, out);
  EXPECT_LE(a.probes(), 1u + 8u);
  EXPECT_EQ(rig.cache->total_refcount(), 0u);
}

TEST(Array, WriteGroupThenFlushPersists) {
  ArrayRig rig;
  Array<uint64_t> a(spec8(4096), *rig.cache);
  std::vector<uint64_t> idx(4096), vals(4096);
  std::iota(idx.begin(), idx.end(), 0);
  for (uint64_t i = 0; i < 4096; ++i) vals[i] = i * 3 + 1;
  a.write_group(idx, vals);
  EXPECT_EQ(rig.cache->flush_all(), 8u);
  for (uint64_t l = 0; l < 8; ++l) EXPECT_EQ(rig.backend.first_word(LineId{0, l * 8}), l * 512 * 3 + 1);
  EXPECT_EQ(a.read(4095), 4095u * 3 + 1);
  a.write(17, 5);
  EXPECT_EQ(a.read(17), 5u);
}

TEST(Array, ReferenceReuseServesManyElements) {
  ArrayRig rig;
  Array<uint64_t> a(spec8(1024), *rig.cache);
  LineRef r = a.acquire(600);
  for (uint64_t i = 512; i < 1024; ++i) r.store<uint64_t>(a.offset_of(i), i);
  r.release();
  EXPECT_EQ(a.probes(), 1u);
  for (uint64_t i = 512; i < 1024; ++i) EXPECT_EQ(a.read(i), i);
}

TEST(Array, ElementSizeMustMatch) {
  ArrayRig rig;
  EXPECT_THROW(Array<uint32_t>(spec8(10), *rig.cache), ConfigError);
}

TEST(Array, GatherMatchesFlatOracle) {
  SystemConfig sc;
  sc.num_devices = 2;
  sc.cache.num_slots = 64;
  sc.cache.line_size = 4096;
  System sys(sc);
  std::vector<uint64_t> data(20000);
  std::mt19937_64 rng(3);
  for (auto& v : data) v = rng();
  Array<uint64_t> a(sys.load_array("data", data), sys.cache());
  std::vector<uint64_t> idx(1000), out(1000);
  for (auto& i : idx) i = rng() % data.size();
  a.read_group(idx, out);
  for (size_t k = 0; k < idx.size(); ++k) ASSERT_EQ(out[k], data[idx[k]]);
}

TEST(Array, ConcurrentDisjointWritesPersist) {
  SystemConfig sc;
  sc.cache.num_slots = 8;
  sc.cache.line_size = 512;
  System sys(sc);
  const ArraySpec spec = sys.place_array("w", 8, 8 * 1000);
  Array<uint64_t> a(spec, sys.cache());
  {
    std::vector<std::jthread> ts;
    for (uint64_t t = 0; t < 8; ++t) {
      ts.emplace_back([&, t] {
        for (uint64_t i = t; i < a.size(); i += 8) a.write(i, i ^ 0xabcdef);
      });
    }
  }
  sys.cache().flush_all();
  std::vector<uint64_t> back(a.size());
  load_array(sys.devices(), spec, std::as_writable_bytes(std::span<uint64_t>(back)));
  for (uint64_t i = 0; i < back.size(); ++i) ASSERT_EQ(back[i], i ^ 0xabcdef) << i;
}

// ---- io stack ---------------------------------------------------------------

TEST(IoStack, RoundRobinOverQueues) {
  DeviceMemory mem(1 << 20);
  DeviceOptions o;
  o.capacity_blocks = 64;
  o.record_command_log = true;
  SimDevice dev(0, builtin_profile("optane-p5800x"), o, mem);
  IoStack io({&dev}, IoStackOptions{4, 16, FenceMode::off}, mem);
  dev.start();
  for (int i = 0; i < 8; ++i) io.submit(0, IoCommand{});
  dev.shutdown();
  std::vector<int> per_queue(4, 0);
  for (const auto& r : dev.command_log()) per_queue[r.queue]++;
  for (int c : per_queue) EXPECT_EQ(c, 2);
  EXPECT_EQ(io.stats().commands, 8u);
}

TEST(IoStack, ReplicasShareReadsAndReceiveWrites) {
  DeviceMemory mem(1 << 20);
  DeviceOptions o;
  o.capacity_blocks = 64;
  SimDevice d0(0, builtin_profile("optane-p5800x"), o, mem);
  SimDevice d1(1, builtin_profile("optane-p5800x"), o, mem);
  IoStack io({&d0, &d1}, IoStackOptions{1, 16, FenceMode::off}, mem);
  io.set_replicas(0, {1});
  EXPECT_THROW(io.set_replicas(0, {0}), ConfigError);
  d0.start();
  d1.start();
  const uint64_t buf = mem.allocate(4096);
  std::memset(mem.data(buf), 7, 4096);
  EXPECT_EQ(io.write_line(LineId{0, 8}, buf, 4096), Status::ok);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(io.read_line(LineId{0, 8}, buf, 4096), Status::ok);
  d0.shutdown();
  d1.shutdown();
  EXPECT_EQ(d0.stats().writes, 1u);
  EXPECT_EQ(d1.stats().writes, 1u);
  EXPECT_EQ(d0.stats().reads, 5u);
  EXPECT_EQ(d1.stats().reads, 5u);
  std::vector<std::byte> blk(kBlockSize);
  d1.load_blocks(15, blk);
  EXPECT_EQ(blk[0], std::byte{7});
}

TEST(IoStack, RejectsPartialBlockLines) {
  DeviceMemory mem(1 << 16);
  SimDevice dev(0, builtin_profile("optane-p5800x"), DeviceOptions{}, mem);
  IoStack io({&dev}, IoStackOptions{}, mem);
  EXPECT_THROW(io.read_line(LineId{0, 0}, 0, 100), ConfigError);
}

// ---- fence ------------------------------------------------------------------

TEST(Fence, ParseModes) {
  EXPECT_EQ(parse_fence_mode("off"), FenceMode::off);
  EXPECT_EQ(parse_fence_mode("naive"), FenceMode::naive);
  EXPECT_EQ(parse_fence_mode("coalesced"), FenceMode::coalesced);
  EXPECT_THROW(parse_fence_mode("sometimes"), ConfigError);
}

struct FenceRig {
  explicit FenceRig(FenceMode m, VisibilityMode vis = VisibilityMode::relaxed)
      : mem(1 << 20), dev(0, builtin_profile("optane-p5800x"), opts(), mem), io({&dev}, {1, 1024, m}, mem) {
    dev.set_visibility_mode(vis, 50);
    dev.start();
  }
  static DeviceOptions opts() {
    DeviceOptions o;
    o.capacity_blocks = 64;
    return o;
  }
  DeviceMemory mem;
  SimDevice dev;
  IoStack io;
};

TEST(Fence, SingleThreadDegeneratesToOneReadEach) {
  for (FenceMode m : {FenceMode::naive, FenceMode::coalesced}) {
    FenceRig rig(m);
    for (int i = 0; i < 20; ++i) rig.io.submit(0, IoCommand{});
    EXPECT_EQ(rig.io.fence_state(0).fenced(), 20u);
    EXPECT_EQ(rig.io.fence_state(0).extra_reads(), 20u);
    rig.dev.shutdown();
  }
}

TEST(Fence, OffIssuesNothing) {
  FenceRig rig(FenceMode::off);
  for (int i = 0; i < 5; ++i) rig.io.submit(0, IoCommand{});
  EXPECT_EQ(rig.io.fence_state(0).extra_reads(), 0u);
  EXPECT_EQ(rig.dev.stats().reads, 5u);
  rig.dev.shutdown();
}

TEST(Fence, WritesAreNotFenced) {
  FenceRig rig(FenceMode::naive);
  IoCommand w;
  w.opcode = Opcode::write;
  rig.io.submit(0, w);
  EXPECT_EQ(rig.io.fence_state(0).fenced(), 0u);
  rig.dev.shutdown();
}

TEST(Fence, BurstCoalesces) {
  for (FenceMode m : {FenceMode::naive, FenceMode::coalesced}) {
    FenceRig rig(m);
    std::latch go(256);
    {
      std::vector<std::jthread> ts;
      for (int t = 0; t < 256; ++t) {
        ts.emplace_back([&] {
          go.arrive_and_wait();
          rig.io.submit(0, IoCommand{});
        });
      }
    }
    rig.dev.shutdown();
    const FenceState& f = rig.io.fence_state(0);
    EXPECT_EQ(f.fenced(), 256u);
    if (m == FenceMode::naive) {
      EXPECT_EQ(f.extra_reads(), 256u);
    } else {
      EXPECT_LT(f.extra_reads(), 64u);
      EXPECT_EQ(f.extra_reads(), f.epochs());
    }
  }
}

}  // namespace
}  // namespace bamsim
