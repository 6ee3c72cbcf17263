#include <gtest/gtest.h>

#include <cstring>
#include <numeric>
#include <thread>
#include <vector>

#include "bamsim/fence.hpp"
#include "bamsim/io_stack.hpp"
#include "bamsim/sim_device.hpp"
#include "torn_read.hpp"

namespace bamsim {
namespace {

DeviceOptions small_opts(uint64_t blocks = 64) {
  DeviceOptions o;
  o.capacity_blocks = blocks;
  return o;
}

TEST(Doorbell, EqualValueIsRegression) {
  DeviceMemory mem(1 << 16);
  SimDevice dev(0, builtin_profile("optane-p5800x"), small_opts(), mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  dev.doorbell_write(qp, DoorbellKind::cq_head, 5);
  EXPECT_THROW(dev.doorbell_write(qp, DoorbellKind::cq_head, 5), ProtocolError);
  EXPECT_THROW(dev.doorbell_write(qp, DoorbellKind::cq_head, 3), ProtocolError);
  EXPECT_EQ(dev.stats().doorbell_regressions, 2u);
  dev.doorbell_write(qp, DoorbellKind::cq_head, 6);
  EXPECT_EQ(dev.stats().cq_doorbell_writes, 2u);
}

TEST(Device, OutOfRangeLbaCompletesWithError) {
  DeviceMemory mem(1 << 16);
  SimDevice dev(0, builtin_profile("optane-p5800x"), small_opts(), mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  dev.start();
  IoCommand cmd;
  cmd.lba = 63;
  cmd.block_count = 2;
  EXPECT_EQ(qp.submit_and_wait(cmd).status, Status::error);
  cmd.lba = 62;
  EXPECT_EQ(qp.submit_and_wait(cmd).status, Status::ok);
  dev.shutdown();
  EXPECT_EQ(dev.stats().errors, 1u);
}

TEST(Device, CompletionBatchLimitsOneEpisode) {
  DeviceMemory mem(1 << 16);
  DeviceOptions o = small_opts();
  o.completion_batch = 3;
  SimDevice dev(0, builtin_profile("optane-p5800x"), o, mem);
  QueuePair& qp = dev.attach_queue_pair(16);
  for (int i = 0; i < 8; ++i) qp.enqueue_command(qp.acquire_slot(), IoCommand{});
  dev.service_step();
  EXPECT_EQ(dev.stats().commands_fetched, 3u);
  EXPECT_EQ(dev.stats().completions_posted, 3u);
  while (dev.service_step()) {
  }
  EXPECT_EQ(dev.stats().completions_posted, 8u);
  EXPECT_EQ(dev.in_service(), 0u);
}

TEST(Device, CompletionsCarryMonotoneSqHead) {
  DeviceMemory mem(1 << 16);
  SimDevice dev(0, builtin_profile("optane-p5800x"), small_opts(), mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  std::vector<SubmittedHandle> hs;
  for (int i = 0; i < 6; ++i) hs.push_back(qp.enqueue_command(qp.acquire_slot(), IoCommand{}));
  uint64_t last = 0;
  while (dev.service_step()) {
  }
  for (auto& h : hs) {
    const CompletionEntry e = qp.poll_completion(h);
    EXPECT_GE(e.sq_head, last);
    EXPECT_LE(e.sq_head, 6u);
    last = e.sq_head;
  }
  EXPECT_EQ(qp.sq_head(), 6u);
}

TEST(Device, ConservationAtQuiescentPoints) {
  DeviceMemory mem(1 << 20);
  SimDevice dev(0, builtin_profile("optane-p5800x"), small_opts(256), mem);
  std::vector<QueuePair*> qps;
  for (int i = 0; i < 4; ++i) qps.push_back(&dev.attach_queue_pair(32));
  dev.start();
  std::vector<std::jthread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 500; ++i) {
        IoCommand cmd;
        cmd.opcode = (i % 3 == 0) ? Opcode::write : Opcode::read;
        cmd.lba = (t * 31 + i) % 256;
        cmd.buffer_offset = static_cast<uint64_t>(t) * kBlockSize;
        ASSERT_EQ(qps[(t + i) % 4]->submit_and_wait(cmd).status, Status::ok);
      }
    });
  }
  ts.clear();
  const DeviceStats s = dev.stats();
  EXPECT_EQ(s.commands_fetched, s.completions_posted + dev.in_service());
  EXPECT_EQ(s.commands_fetched, 8u * 500);
  EXPECT_EQ(s.doorbell_regressions, 0u);
  for (auto* q : qps) EXPECT_EQ(q->stats().slot_generation_violations, 0u);
  dev.shutdown();
}

TEST(Visibility, StrictModeNeverTears) {
  const auto r = testing::run_torn_read_probe(VisibilityMode::strict, 0, FenceMode::off, 2000, 1);
  EXPECT_EQ(r.torn, 0u);
}

TEST(Visibility, RelaxedModeWithoutFenceTears) {
  const auto r = testing::run_torn_read_probe(VisibilityMode::relaxed, 50, FenceMode::off, 500, 1);
  EXPECT_GT(r.torn, 0u);
}

TEST(Visibility, RelaxedModeWithFenceDoesNotTear) {
  for (FenceMode m : {FenceMode::naive, FenceMode::coalesced}) {
    const auto r = testing::run_torn_read_probe(VisibilityMode::relaxed, 50, m, 500, 4);
    EXPECT_EQ(r.torn, 0u) << to_string(m);
  }
}

TEST(Visibility, DeferredCopiesLandAfterDelay) {
  DeviceMemory mem(1 << 16);
  SimDevice dev(0, builtin_profile("optane-p5800x"), small_opts(), mem);
  dev.set_visibility_mode(VisibilityMode::relaxed, 2000);
  QueuePair& qp = dev.attach_queue_pair(4);
  std::vector<std::byte> block(kBlockSize, std::byte{0x5a});
  dev.store_blocks(1, block);
  IoCommand cmd;
  cmd.lba = 1;
  cmd.buffer_offset = 0;
  const auto h = qp.enqueue_command(qp.acquire_slot(), cmd);
  dev.service_step();
  qp.poll_completion(h);
  EXPECT_EQ(*mem.data(0), std::byte{0});
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  dev.service_step();
  EXPECT_EQ(*mem.data(0), std::byte{0x5a});
  EXPECT_EQ(dev.stats().deferred_copies, 1u);
}

}  // namespace
}  // namespace bamsim
