#include "bamsim/throughput_model.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <vector>

#include "bamsim/common.hpp"

namespace bamsim {

void ModelTopology::validate() const {
  profile.validate();
  if (devices == 0 || queues_per_device == 0 || queue_depth == 0) {
    throw ConfigError("model topology needs at least one device, queue and slot");
  }
  if (!(link.shared_bandwidth_Bps > 0) || !(queue_pair_iops > 0)) {
    throw ConfigError("model topology rates must be positive");
  }
}

double device_iops(const ModelTopology& topo, Opcode op, uint64_t bytes) {
  const double wire = static_cast<double>(bytes + topo.link.command_overhead_bytes);
  return std::min(topo.profile.iops_cap(op, bytes), topo.profile.link_bandwidth_Bps / wire);
}

double aggregate_iops(const ModelTopology& topo, Opcode op, uint64_t bytes, uint64_t inflight) {
  const double wire = static_cast<double>(bytes + topo.link.command_overhead_bytes);
  const double latency = topo.profile.latency_seconds(op);
  const uint64_t slots = uint64_t{topo.total_queues()} * topo.queue_depth;
  const double concurrency = static_cast<double>(std::min(inflight, slots));
  double rate = topo.devices * device_iops(topo, op, bytes);
  rate = std::min(rate, topo.link.shared_bandwidth_Bps / wire);
  rate = std::min(rate, topo.total_queues() * topo.queue_pair_iops);
  rate = std::min(rate, concurrency / latency);
  return rate;
}

double phase_seconds(const ModelTopology& topo, Opcode op, uint64_t bytes, uint64_t commands,
                     uint64_t inflight) {
  if (commands == 0) return 0.0;
  return static_cast<double>(commands) / aggregate_iops(topo, op, bytes, std::max<uint64_t>(inflight, 1)) +
         topo.profile.latency_seconds(op);
}

RandBenchModelResult simulate_randbench(const ModelTopology& topo, Opcode op, uint64_t bytes,
                                        uint64_t threads, uint64_t reqs_per_thread) {
  topo.validate();
  if (threads == 0 || reqs_per_thread == 0) throw ConfigError("randbench needs threads and requests");

  const double latency = topo.profile.latency_seconds(op);
  const double dev_interval = 1.0 / device_iops(topo, op, bytes);
  const double link_interval =
      static_cast<double>(bytes + topo.link.command_overhead_bytes) / topo.link.shared_bandwidth_Bps;
  const double qp_interval = 1.0 / topo.queue_pair_iops;
  const uint32_t nq = topo.total_queues();

  using MinHeap = std::priority_queue<double, std::vector<double>, std::greater<>>;
  std::vector<double> dev_next(topo.devices, 0.0);
  std::vector<double> qp_next(nq, 0.0);
  std::vector<MinHeap> outstanding(nq);
  double link_next = 0.0;

  // (ready time, thread id, requests issued)
  struct ThreadState {
    double time;
    uint64_t id;
    uint64_t issued;
    bool operator>(const ThreadState& o) const { return time != o.time ? time > o.time : id > o.id; }
  };
  std::priority_queue<ThreadState, std::vector<ThreadState>, std::greater<>> ready;
  for (uint64_t t = 0; t < threads; ++t) ready.push({0.0, t, 0});

  uint64_t k = 0;
  double finish = 0.0;
  while (!ready.empty()) {
    ThreadState ts = ready.top();
    ready.pop();
    const uint32_t dev = static_cast<uint32_t>(k % topo.devices);
    const uint32_t q = dev * topo.queues_per_device +
                       static_cast<uint32_t>((k / topo.devices) % topo.queues_per_device);
    ++k;

    double t = ts.time;
    MinHeap& slots = outstanding[q];
    while (!slots.empty() && slots.top() <= t) slots.pop();
    if (slots.size() >= topo.queue_depth) {
      t = std::max(t, slots.top());
      slots.pop();
    }
    const double start = std::max({t, dev_next[dev], link_next, qp_next[q]});
    dev_next[dev] = start + dev_interval;
    link_next = start + link_interval;
    qp_next[q] = start + qp_interval;
    const double done = start + latency;
    slots.push(done);
    finish = std::max(finish, done);

    if (++ts.issued < reqs_per_thread) {
      ts.time = done;
      ready.push(ts);
    }
  }
  RandBenchModelResult r;
  r.requests = threads * reqs_per_thread;
  r.seconds = finish;
  r.iops = static_cast<double>(r.requests) / finish;
  return r;
}

}  // namespace bamsim
