#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include "bamsim/queue_pair.hpp"
#include "bamsim/sim_device.hpp"
#include "fifo_oracle.hpp"

namespace bamsim {
namespace {

class RecordingSink : public DoorbellSink {
 public:
  void ring(QueuePair&, DoorbellKind kind, uint64_t value) override {
    std::lock_guard<std::mutex> g(mu);
    rings.emplace_back(kind, value);
  }
  size_t count(DoorbellKind kind) {
    std::lock_guard<std::mutex> g(mu);
    return std::count_if(rings.begin(), rings.end(), [&](auto& r) { return r.first == kind; });
  }
  std::mutex mu;
  std::vector<std::pair<DoorbellKind, uint64_t>> rings;
};

PollConfig short_poll(int ms) {
  PollConfig p;
  p.timeout = std::chrono::milliseconds(ms);
  return p;
}

TEST(Ticket, FirstCallerGetsSlotZero) {
  RecordingSink sink;
  QueuePair qp(0, 128, &sink);
  const Ticket t = qp.acquire_slot();
  EXPECT_EQ(t.raw, 0u);
  EXPECT_EQ(t.slot, 0u);
  EXPECT_EQ(t.turn, 0u);
  EXPECT_EQ(qp.ticket_counter(), 2u);
}

TEST(Ticket, ArithmeticMatchesSequentialReplay) {
  RecordingSink sink;
  QueuePair qp(0, 128, &sink);
  Ticket t;
  for (int i = 0; i < 131; ++i) t = qp.acquire_slot();
  EXPECT_EQ(t.raw, 260u);
  EXPECT_EQ(t.slot, 2u);
  EXPECT_EQ(t.turn, 1u);
  // raw = 2 * (turn * Q + slot)
  for (uint32_t raw = 0; raw < 100000; raw += 2) {
    const Ticket x = Ticket::from_raw(raw, 64);
    EXPECT_EQ(raw, 2 * (x.turn * 64 + x.slot));
  }
}

TEST(Ticket, ConcurrentAcquisitionsAreDistinct) {
  RecordingSink sink;
  QueuePair qp(0, 1024, &sink);
  constexpr int kThreads = 16, kPer = 625;
  std::vector<std::vector<uint32_t>> got(kThreads);
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < kPer; ++i) got[t].push_back(qp.acquire_slot().raw);
    });
  }
  for (auto& th : threads) th.join();
  std::vector<uint32_t> all;
  for (auto& g : got) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), 10000u);
  for (uint32_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], 2 * i);
}

TEST(Ticket, CounterWrapsModulo32Bits) {
  const uint32_t q = 8;
  const uint32_t start = 0u - 4 * q;  // two rounds before wrap
  RecordingSink sink;
  QueuePair qp(0, q, &sink, {}, start);
  for (uint32_t i = 0; i < 2 * q; ++i) qp.acquire_slot();
  const Ticket t = qp.acquire_slot();
  EXPECT_EQ(t.raw, 0u);
  EXPECT_EQ(t.slot, 0u);
  EXPECT_EQ(t.turn, 0u);
}

TEST(QueueConfig, RejectsNonPowerOfTwo) {
  RecordingSink sink;
  EXPECT_THROW(QueuePair(0, 3, &sink), ConfigError);
  EXPECT_THROW(QueuePair(0, 1, &sink), ConfigError);
  EXPECT_THROW(QueuePair(0, 131072, &sink), ConfigError);
  EXPECT_NO_THROW(QueuePair(0, 65536, &sink));
}

TEST(Enqueue, SingleCommandReferenceTrace) {
  RecordingSink sink;
  QueuePair qp(0, 8, &sink);
  IoCommand cmd;
  cmd.lba = 7;
  const SubmittedHandle h = qp.enqueue_command(qp.acquire_slot(), cmd);
  EXPECT_EQ(h.ticket.slot, 0u);
  EXPECT_EQ(qp.sq_entry(0).lba, 7u);
  ASSERT_EQ(sink.rings.size(), 1u);
  EXPECT_EQ(sink.rings[0].first, DoorbellKind::sq_tail);
  EXPECT_EQ(sink.rings[0].second, 1u);
  EXPECT_EQ(qp.turn_counter(0), 1u);
  EXPECT_FALSE(qp.mark(QueueKind::sq, 0));
}

TEST(Enqueue, ConcurrentFillLandsInTicketOrder) {
  RecordingSink sink;
  QueuePair qp(0, 8, &sink);
  std::vector<std::thread> threads;
  std::vector<SubmittedHandle> handles(8);
  std::atomic<bool> go{false};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      while (!go.load()) std::this_thread::yield();
      IoCommand cmd;
      cmd.lba = 100 + i;
      handles[i] = qp.enqueue_command(qp.acquire_slot(), cmd);
    });
  }
  go = true;
  for (auto& t : threads) t.join();
  EXPECT_EQ(qp.sq_tail(), 8u);
  const size_t rings = sink.count(DoorbellKind::sq_tail);
  EXPECT_GE(rings, 1u);
  EXPECT_LE(rings, 8u);
  for (const auto& h : handles) {
    EXPECT_EQ(qp.sq_entry(h.ticket.slot).cid, h.cid);
    EXPECT_EQ(h.cid, h.ticket.slot);
  }
  uint64_t last = 0;
  for (auto& [kind, value] : sink.rings) {
    EXPECT_GT(value, last);
    last = value;
  }
}

TEST(Enqueue, FullQueueBlocksUntilHeadAdvances) {
  DeviceMemory mem(1 << 16);
  DeviceOptions opts;
  opts.capacity_blocks = 64;
  SimDevice dev(0, builtin_profile("optane-p5800x"), opts, mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  std::vector<SubmittedHandle> handles;
  for (int i = 0; i < 8; ++i) handles.push_back(qp.enqueue_command(qp.acquire_slot(), IoCommand{}));

  std::atomic<bool> done{false};
  std::thread ninth([&] {
    qp.enqueue_command(qp.acquire_slot(), IoCommand{});
    done = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_FALSE(done.load());
  EXPECT_EQ(qp.turn_counter(0), 1u);

  dev.service_step();
  qp.poll_completion(handles[0]);
  ninth.join();
  EXPECT_TRUE(done.load());
  EXPECT_EQ(qp.sq_tail(), 9u);
}

TEST(MoveTail, ContiguousMarksCoalesceIntoOneRing) {
  RecordingSink sink;
  QueuePair qp(0, 16, &sink);
  for (uint32_t s = 0; s < 5; ++s) qp.set_mark(QueueKind::sq, s);
  qp.move_tail(0);
  EXPECT_EQ(qp.sq_tail(), 5u);
  ASSERT_EQ(sink.rings.size(), 1u);
  EXPECT_EQ(sink.rings[0].second, 5u);
  for (uint32_t s = 0; s < 5; ++s) EXPECT_FALSE(qp.mark(QueueKind::sq, s));
}

TEST(MoveTail, GapAtTailKeepsCallerWaiting) {
  RecordingSink sink;
  QueuePair qp(0, 16, &sink, short_poll(50));
  qp.set_mark(QueueKind::sq, 1);
  EXPECT_THROW(qp.move_tail(1), TimeoutError);
  EXPECT_EQ(qp.sq_tail(), 0u);
  EXPECT_TRUE(sink.rings.empty());
  // Filling the gap releases both.
  qp.set_mark(QueueKind::sq, 0);
  qp.move_tail(1);
  EXPECT_EQ(qp.sq_tail(), 2u);
  EXPECT_EQ(sink.rings.size(), 1u);
}

TEST(MoveTail, NothingToMoveRingsNothing) {
  RecordingSink sink;
  QueuePair qp(0, 16, &sink);
  {
    std::lock_guard<SpinLock> g(qp.lock(QueueKind::sq));
    EXPECT_EQ(qp.reset_marks(qp.sq_tail(), QueueKind::sq), 0u);
  }
  qp.move_tail(3);  // mark not set: returns immediately
  EXPECT_TRUE(sink.rings.empty());
}

TEST(ResetMarks, StopsAtFirstClearBit) {
  RecordingSink sink;
  QueuePair qp(0, 16, &sink);
  const std::vector<int> marks = {1, 1, 1, 0, 1, 1};
  for (uint32_t i = 0; i < marks.size(); ++i) {
    if (marks[i]) qp.set_mark(QueueKind::cq, i);
  }
  std::lock_guard<SpinLock> g(qp.lock(QueueKind::cq));
  EXPECT_EQ(qp.reset_marks(0, QueueKind::cq), 3u);
  for (uint32_t i = 0; i < 3; ++i) EXPECT_FALSE(qp.mark(QueueKind::cq, i));
  EXPECT_TRUE(qp.mark(QueueKind::cq, 4));
  EXPECT_TRUE(qp.mark(QueueKind::cq, 5));
}

TEST(ResetMarks, AllClearReturnsZero) {
  RecordingSink sink;
  QueuePair qp(0, 16, &sink);
  std::lock_guard<SpinLock> g(qp.lock(QueueKind::sq));
  EXPECT_EQ(qp.reset_marks(0, QueueKind::sq), 0u);
}

TEST(ResetMarks, SqStopsAtHeadPlusQ) {
  RecordingSink sink;
  QueuePair qp(0, 4, &sink);
  for (uint32_t i = 0; i < 4; ++i) qp.set_mark(QueueKind::sq, i);
  std::lock_guard<SpinLock> g(qp.lock(QueueKind::sq));
  EXPECT_EQ(qp.reset_marks(0, QueueKind::sq), 4u);
}

TEST(PollCompletion, SingleRoundTrip) {
  DeviceMemory mem(1 << 16);
  DeviceOptions opts;
  opts.capacity_blocks = 64;
  SimDevice dev(0, builtin_profile("optane-p5800x"), opts, mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  const SubmittedHandle h = qp.enqueue_command(qp.acquire_slot(), IoCommand{});
  dev.service_step();
  const CompletionEntry e = qp.poll_completion(h);
  EXPECT_EQ(e.cid, h.cid);
  EXPECT_EQ(e.status, Status::ok);
  EXPECT_EQ(e.sq_head, 1u);
  EXPECT_EQ(e.phase, 1u);
  EXPECT_EQ(qp.turn_counter(0), 2u);
  EXPECT_EQ(qp.cq_head(), 1u);
  EXPECT_EQ(qp.sq_head(), 1u);
}

TEST(PollCompletion, AccountingAcrossRounds) {
  DeviceMemory mem(1 << 16);
  DeviceOptions opts;
  opts.capacity_blocks = 64;
  SimDevice dev(0, builtin_profile("optane-p5800x"), opts, mem);
  QueuePair& qp = dev.attach_queue_pair(16);
  dev.start();
  std::mutex mu;
  std::multiset<uint32_t> completed;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 8; ++i) {
        const CompletionEntry e = qp.submit_and_wait(IoCommand{});
        std::lock_guard<std::mutex> g(mu);
        completed.insert(e.cid);
      }
    });
  }
  for (auto& t : threads) t.join();
  dev.shutdown();
  ASSERT_EQ(completed.size(), 64u);
  for (uint32_t cid = 0; cid < 64; ++cid) EXPECT_EQ(completed.count(cid), 1u);
  uint64_t sum = 0;
  for (uint32_t e = 0; e < 16; ++e) {
    EXPECT_EQ(qp.turn_counter(e) % 2, 0u);
    EXPECT_EQ(qp.turn_counter(e) / 2, 4u);
    sum += qp.turn_counter(e) / 2;
  }
  EXPECT_EQ(sum, 64u);
}

TEST(PollCompletion, ErrorStatusPassesThrough) {
  DeviceMemory mem(1 << 16);
  DeviceOptions opts;
  opts.capacity_blocks = 64;
  SimDevice dev(0, builtin_profile("optane-p5800x"), opts, mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  IoCommand bad;
  bad.lba = 1000;
  const SubmittedHandle h = qp.enqueue_command(qp.acquire_slot(), bad);
  dev.service_step();
  const CompletionEntry e = qp.poll_completion(h);
  EXPECT_EQ(e.status, Status::error);
  EXPECT_EQ(qp.turn_counter(0), 2u);
  EXPECT_EQ(qp.cq_head(), 1u);
}

TEST(SubmitAndWait, WriteThenReadRoundTrip) {
  DeviceMemory mem(1 << 16);
  DeviceOptions opts;
  opts.capacity_blocks = 64;
  SimDevice dev(0, builtin_profile("optane-p5800x"), opts, mem);
  QueuePair& qp = dev.attach_queue_pair(8);
  dev.start();
  auto src = mem.span(0, kBlockSize);
  for (uint32_t i = 0; i < kBlockSize; ++i) src[i] = std::byte(i * 7 + 3);
  IoCommand w{Opcode::write, 0, 7, 1, 0};
  ASSERT_EQ(qp.submit_and_wait(w).status, Status::ok);
  IoCommand r{Opcode::read, 0, 7, 1, kBlockSize};
  ASSERT_EQ(qp.submit_and_wait(r).status, Status::ok);
  auto dst = mem.span(kBlockSize, kBlockSize);
  EXPECT_TRUE(std::equal(src.begin(), src.end(), dst.begin()));

  std::vector<std::byte> backing(kBlockSize);
  dev.load_blocks(7, backing);
  EXPECT_TRUE(std::equal(src.begin(), src.end(), backing.begin()));
}

TEST(SequentialOracle, RandomTracesMatchCircularFifo) {
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    const uint32_t q = 1u << (1 + seed % 5);
    const auto r = testing::run_fifo_trace(seed, q, 1 + seed % 7, 200);
    ASSERT_TRUE(r.ok) << r.failure;
  }
}

}  // namespace
}  // namespace bamsim
