#include <gtest/gtest.h>

#include <ringrt/sim_device.hpp>

#include <algorithm>
#include <map>
#include <vector>

using namespace ringrt;

namespace {

IoRequest nop() {
  IoRequest r;
  r.op = OpKind::Nop;
  return r;
}

ApiConfig no_poll() {
  ApiConfig c;
  c.sq_poll = false;
  return c;
}

std::vector<Completion> run_all(SimBackend& b) {
  std::vector<Completion> out;
  do {
    for (auto& c : b.reap_completions(512)) out.push_back(c);
  } while (b.progress());
  for (auto& c : b.reap_completions(512)) out.push_back(c);
  return out;
}

// Closed loop at queue depth `qd` for one simulated second; returns the
// number of completions observed in that second.
std::uint64_t closed_loop(const DeviceModel& m, std::size_t qd, std::uint64_t seed) {
  ApiConfig api;
  api.sq_entries = 256;
  api.cq_entries = 512;
  SimBackend b(m, api, seed);
  std::size_t outstanding = 0;
  std::uint64_t done = 0;
  while (b.device().now() < kSecond) {
    for (const auto& c : b.reap_completions(512)) {
      --outstanding;
      if (c.complete_time <= kSecond) ++done;
    }
    while (outstanding < qd && b.push_submission(nop()).accepted()) ++outstanding;
    if (!b.progress()) break;
  }
  return done;
}

}  // namespace

TEST(DeviceModel, Validation) {
  EXPECT_TRUE(model_violations(DeviceModel{}).empty());
  DeviceModel m;
  m.parallelism = 0;
  EXPECT_FALSE(model_violations(m).empty());
  EXPECT_THROW(SimDevice(m, 1), std::invalid_argument);
  m = DeviceModel{};
  m.jitter = 1.0;
  EXPECT_FALSE(model_violations(m).empty());
  m = DeviceModel{};
  m.service_time = 0;
  EXPECT_FALSE(model_violations(m).empty());
}

TEST(SimDevice, SingleOpTakesServiceTime) {
  DeviceModel m;
  m.parallelism = 1;
  SimBackend b(m, no_poll(), 1);
  b.push_submission(nop());
  const auto cs = run_all(b);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].complete_time, 100 * kMicro);
  EXPECT_TRUE(cs[0].ok());
}

TEST(SimDevice, ParallelismBatchesCompletions) {
  DeviceModel m;
  m.parallelism = 16;
  SimBackend b(m, no_poll(), 1);
  for (int i = 0; i < 32; ++i) ASSERT_TRUE(b.push_submission(nop()).accepted());
  const auto cs = run_all(b);
  ASSERT_EQ(cs.size(), 32u);
  std::map<Nanos, int> at;
  for (const auto& c : cs) ++at[c.complete_time];
  const std::map<Nanos, int> want{{100 * kMicro, 16}, {200 * kMicro, 16}};
  EXPECT_EQ(at, want);
  EXPECT_EQ(b.device().max_in_service(), 16u);
}

TEST(SimDevice, FaultPlanPassthrough) {
  DeviceModel m;
  m.fault_plan[7] = 5;
  SimBackend b(m, no_poll(), 1);
  for (int i = 0; i < 12; ++i) b.push_submission(nop());
  for (const auto& c : run_all(b)) {
    if (c.request_id == 7) {
      EXPECT_EQ(c.status, CompletionStatus::Error);
      EXPECT_EQ(c.error_code, 5);
    } else {
      EXPECT_TRUE(c.ok()) << c.request_id;
    }
  }
}

TEST(SimDevice, JitterStaysInBand) {
  DeviceModel m = DeviceModel::desk_nvme();
  m.parallelism = 1024;
  SimBackend b(m, no_poll(), 9);
  for (int i = 0; i < 256; ++i) b.push_submission(nop());
  bool varied = false;
  for (const auto& c : run_all(b)) {
    EXPECT_GE(c.complete_time, 90 * kMicro);
    EXPECT_LE(c.complete_time, 110 * kMicro);
    varied = varied || c.complete_time != 100 * kMicro;
  }
  EXPECT_TRUE(varied);
}

TEST(SimDevice, RandomReadMultiplierAppliesOffSequentialPath) {
  DeviceModel m;
  m.parallelism = 1;
  m.random_read_multiplier = 2.0;
  SimBackend b(m, no_poll(), 1);
  IoRequest r;
  r.op = OpKind::Read;
  r.length = 4096;
  r.offset = 0;
  b.push_submission(r);
  r.offset = 4096;  // continues the previous read
  b.push_submission(r);
  r.offset = 40960;
  b.push_submission(r);
  const auto cs = run_all(b);
  ASSERT_EQ(cs.size(), 3u);
  EXPECT_EQ(cs[1].complete_time - cs[0].complete_time, 100 * kMicro);
  EXPECT_EQ(cs[2].complete_time - cs[1].complete_time, 200 * kMicro);
}

TEST(SteadyState, ClosedForm) {
  DeviceModel m;
  EXPECT_DOUBLE_EQ(steady_state_iops(m, 1), 10'000.0);
  m.parallelism = 16;
  EXPECT_DOUBLE_EQ(steady_state_iops(m, 32), 160'000.0);
  EXPECT_DOUBLE_EQ(steady_state_iops(m, 64), steady_state_iops(m, 32));
  EXPECT_THROW(steady_state_iops(m, 0), std::invalid_argument);
}

TEST(SteadyState, EventSimulationMatchesClosedForm) {
  DeviceModel m;
  m.parallelism = 16;
  for (std::size_t qd : {1, 4, 16, 32, 64}) {
    const double got = static_cast<double>(closed_loop(m, qd, 3));
    const double want = steady_state_iops(m, qd);
    EXPECT_NEAR(got / want, 1.0, 0.01) << "qd " << qd;
  }
}

TEST(PollThread, ShortGapsKeepItAwake) {
  PollThreadModel p(kMilli, 5 * kMicro);
  Nanos t = 0;
  for (int i = 0; i < 200; ++i, t += kMilli / 2) p.tick(t, 1);
  EXPECT_EQ(p.wakeups(), 1u);
  EXPECT_EQ(p.sleeps(), 0u);
  EXPECT_EQ(p.state(), PollState::Active);
  const Nanos end = t - kMilli / 2;
  EXPECT_EQ(p.busy_ns(end), end);
}

TEST(PollThread, SleepsExactlyOneTimeoutAfterLastWork) {
  PollThreadModel p(kMilli, 5 * kMicro);
  EXPECT_EQ(p.tick(0, 1), PollState::Waking);
  EXPECT_EQ(p.tick(5 * kMicro, 0), PollState::Active);
  EXPECT_EQ(p.tick(5 * kMicro + kMilli - 1, 0), PollState::Active);
  EXPECT_EQ(p.tick(2 * kMilli, 0), PollState::Asleep);
  ASSERT_EQ(p.sleep_times().size(), 1u);
  EXPECT_EQ(p.sleep_times()[0], 5 * kMicro + kMilli);
  EXPECT_EQ(p.busy_ns(3 * kMilli), 5 * kMicro + kMilli);
}

TEST(PollThread, AsleepWakesAfterWakeupCost) {
  PollThreadModel p(kMilli, 5 * kMicro);
  p.tick(0, 1);
  p.tick(10 * kMilli, 0);
  ASSERT_EQ(p.state(), PollState::Asleep);
  EXPECT_EQ(p.tick(10 * kMilli, 1), PollState::Waking);
  EXPECT_EQ(p.wake_ready_at(), 10 * kMilli + 5 * kMicro);
  EXPECT_EQ(p.tick(10 * kMilli + 5 * kMicro - 1, 0), PollState::Waking);
  EXPECT_EQ(p.tick(10 * kMilli + 5 * kMicro, 0), PollState::Active);
}

TEST(PollThread, DeviceChargesWakeupBeforeConsuming) {
  SimDevice dev(DeviceModel{}, 1);
  ApiInstance api;
  dev.attach(api);
  dev.enable_trace();
  api.sq_push(nop(), 0);
  dev.run_until(0);
  EXPECT_EQ(dev.consumed(0), 0u);
  dev.run_until(5 * kMicro);
  EXPECT_EQ(dev.consumed(0), 1u);
  dev.run_until(kSecond);
  ASSERT_EQ(api.cq_reap(4).size(), 1u);
  // Consumption charge (100 ns) comes before service.
  const auto& tr = dev.trace();
  const auto start = std::find_if(tr.begin(), tr.end(), [](const TraceEvent& e) { return e.kind == TraceKind::Start; });
  ASSERT_NE(start, tr.end());
  EXPECT_EQ(start->time, 5 * kMicro + 100);
  EXPECT_EQ(dev.poll_thread(0)->sleeps(), 1u);
}

TEST(PollThread, GappedSubmissionsThroughDevice) {
  for (const Nanos gap : {kMilli / 2, 2 * kMilli}) {
    SimDevice dev(DeviceModel{}, 1);
    ApiInstance api;
    dev.attach(api);
    const int n = 100;
    for (int i = 0; i < n; ++i) {
      dev.run_until(i * gap);
      api.sq_push(nop(), dev.now());
      dev.run_until(i * gap);
      api.cq_reap(16);
    }
    const Nanos end = (n - 1) * gap;
    dev.run_until(end);
    const PollThreadModel& p = *dev.poll_thread(0);
    if (gap < kMilli) {
      EXPECT_EQ(p.sleeps(), 0u);
      EXPECT_GT(static_cast<double>(p.busy_ns(end)) / static_cast<double>(end), 0.99);
    } else {
      ASSERT_EQ(p.sleeps(), static_cast<std::uint64_t>(n - 1));
      for (int i = 0; i + 1 < n; ++i) EXPECT_EQ(p.sleep_times()[i], i * gap + 5 * kMicro + kMilli);
    }
  }
}

TEST(SimDevice, DeterministicTrace) {
  auto trace = [](std::uint64_t seed) {
    DeviceModel m = DeviceModel::desk_nvme();
    m.fault_rate = 0.05;
    SimBackend b(m, ApiConfig{}, seed);
    b.device().enable_trace();
    for (int i = 0; i < 200; ++i) b.push_submission(nop());
    run_all(b);
    return b.device().trace_csv();
  };
  EXPECT_EQ(trace(4), trace(4));
  EXPECT_NE(trace(4), trace(5));
}

TEST(SimDevice, ConservationUnderFaults) {
  DeviceModel m = DeviceModel::desk_nvme();
  m.fault_rate = 0.1;
  SimBackend b(m, ApiConfig{}, 2);
  std::uint64_t pushed = 0, ok = 0, err = 0;
  while (pushed < 5000) {
    while (pushed < 5000 && b.push_submission(nop()).accepted()) ++pushed;
    for (const auto& c : b.reap_completions(512)) (c.ok() ? ok : err)++;
    b.progress();
  }
  for (const auto& c : run_all(b)) (c.ok() ? ok : err)++;
  EXPECT_EQ(ok + err, pushed);
  EXPECT_GT(err, 300u);
  EXPECT_LT(err, 700u);
  EXPECT_EQ(b.device().completed_total(), pushed);
}
