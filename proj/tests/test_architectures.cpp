#include <gtest/gtest.h>

#include <ringrt/architectures.hpp>
#include <ringrt/corpus.hpp>

#include <tuple>

using namespace ringrt;

namespace {

DeviceModel flat_device(std::uint32_t parallelism = 64) {
  DeviceModel m;
  m.parallelism = parallelism;
  return m;
}

Workload corpus_workload(std::uint64_t seed, std::size_t specs, std::size_t tasks, std::size_t concurrency) {
  Workload wl;
  for (auto& s : generate_corpus(seed, specs)) wl.specs.push_back(std::make_shared<const TaskSpec>(std::move(s)));
  wl.task_count = tasks;
  wl.concurrency = concurrency;
  return wl;
}

Workload reads(std::size_t tasks, std::size_t concurrency, Nanos compute = 0) {
  return uniform_workload(io_task_spec(OpKind::Read, OffsetMode::Sequential, compute), tasks, concurrency);
}

void expect_reference_states(const RunResult& r, const Workload& wl) {
  ASSERT_EQ(r.final_states.size(), wl.tasks());
  for (std::size_t i = 0; i < wl.tasks(); ++i) {
    ASSERT_EQ(r.final_states[i], reference_final_state(*wl.spec_ptr(i), i, wl.geometry)) << "task " << i;
  }
}

}  // namespace

TEST(Workload, SquareWaveRates) {
  const auto a = square_wave_arrivals(1, 100'000, 0.1, 10 * kMilli, 100 * kMilli);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  std::size_t peak = 0, trough = 0;
  for (Nanos t : a) ((t / (10 * kMilli)) % 2 == 0 ? peak : trough)++;
  EXPECT_NEAR(static_cast<double>(peak), 5000.0, 300.0);
  EXPECT_NEAR(static_cast<double>(trough), 500.0, 100.0);
  EXPECT_EQ(a, square_wave_arrivals(1, 100'000, 0.1, 10 * kMilli, 100 * kMilli));
  EXPECT_THROW(square_wave_arrivals(1, 0, 0.1, 1, 1), std::invalid_argument);
}

TEST(RunWorkload, RejectsBadInput) {
  RunConfig cfg;
  Workload empty;
  EXPECT_THROW(run_workload(cfg, empty), std::invalid_argument);
  Workload wl = reads(10, 1);
  cfg.threads = 0;
  EXPECT_THROW(run_workload(cfg, wl), std::invalid_argument);
  cfg.threads = 1;
  cfg.api.cq_entries = 8;
  EXPECT_THROW(run_workload(cfg, wl), std::invalid_argument);
}

using Combo = std::tuple<Architecture, Scheme, ExecMode, ClockMode>;

class EveryArchitecture : public ::testing::TestWithParam<Combo> {};

TEST_P(EveryArchitecture, ExactlyOnceAndReferenceStates) {
  const auto [arch, scheme, mode, clock] = GetParam();
  Workload wl = corpus_workload(17, 40, clock == ClockMode::Wall ? 300 : 1500, 3);
  RunConfig cfg;
  cfg.arch = arch;
  cfg.scheme = scheme;
  cfg.exec_mode = mode;
  cfg.clock = clock;
  cfg.threads = 3;
  cfg.instances = 2;
  cfg.device = DeviceModel::desk_nvme();
  cfg.device.fault_rate = 0.002;
  cfg.keep_final_states = true;
  cfg.seed = 5;
  const RunResult r = run_workload(cfg, wl);
  EXPECT_TRUE(r.exactly_once);
  EXPECT_TRUE(r.report.conserved());
  EXPECT_EQ(r.report.tasks_completed, wl.tasks());
  EXPECT_EQ(r.report.double_completions, 0u);
  EXPECT_EQ(r.report.callback_placement_violations, 0u);
  if (arch != Architecture::DirectAccess) {
    EXPECT_EQ(r.report.sq_producer_violations, 0u);
    EXPECT_EQ(r.report.cq_consumer_violations, 0u);
  }
  if (arch == Architecture::SharedNothing) {
    EXPECT_EQ(r.report.cross_thread_msgs, 0u);
  }
  EXPECT_EQ(r.report.inactive_deliveries, 0u);
  // Error completions change the state, so compare only fault-free runs.
  if (r.report.errored == 0 && r.report.canceled == 0) expect_reference_states(r, wl);
}

std::string combo_name(const ::testing::TestParamInfo<Combo>& info) {
  const auto [a, s, m, c] = info.param;
  return std::string(to_string(a)) + "_" + to_string(s) + "_" + to_string(m) + "_" + to_string(c);
}

INSTANTIATE_TEST_SUITE_P(All, EveryArchitecture,
                         ::testing::Combine(::testing::Values(Architecture::SharedNothing, Architecture::DirectAccess,
                                                              Architecture::StaticPool, Architecture::DynamicPool),
                                            ::testing::Values(Scheme::Full, Scheme::Callback, Scheme::Coroutine),
                                            ::testing::Values(ExecMode::IoThreads, ExecMode::InlineCallbacks),
                                            ::testing::Values(ClockMode::Virtual, ClockMode::Wall)),
                         combo_name);

TEST(SchemeEquivalence, FaultFreeStatesMatchReference) {
  Workload wl = corpus_workload(23, 120, 120, 4);
  for (const Scheme s : {Scheme::Full, Scheme::Callback, Scheme::Coroutine}) {
    for (const Architecture a : {Architecture::SharedNothing, Architecture::StaticPool}) {
      RunConfig cfg;
      cfg.arch = a;
      cfg.scheme = s;
      cfg.threads = 4;
      cfg.instances = 2;
      cfg.keep_final_states = true;
      const auto r = run_workload(cfg, wl);
      expect_reference_states(r, wl);
    }
  }
}

TEST(SharedNothing, ScalesLinearlyWithThreads) {
  RunConfig cfg;
  cfg.device = flat_device(256);
  const auto one = run_shared_nothing(reads(20'000, 8), 1, Scheme::Callback, cfg).report;
  const auto four = run_shared_nothing(reads(80'000, 8), 4, Scheme::Callback, cfg).report;
  EXPECT_NEAR(four.iops() / (4.0 * one.iops()), 1.0, 0.05);
  EXPECT_EQ(four.cross_thread_msgs, 0u);
  EXPECT_EQ(four.per_instance.size(), 4u);
}

TEST(SharedNothing, SingleThreadIsDeterministic) {
  const auto a = run_shared_nothing(reads(2000, 4), 1, Scheme::Full).report;
  const auto b = run_shared_nothing(reads(2000, 4), 1, Scheme::Full).report;
  EXPECT_EQ(metrics_csv_row(a), metrics_csv_row(b));
}

TEST(SharedNothing, CrossShardDependencyRefused) {
  Workload wl = reads(8, 1);
  wl.dependencies = {{0, 2}};
  EXPECT_NO_THROW(run_shared_nothing(wl, 2, Scheme::Callback));
  wl.dependencies = {{0, 1}};
  EXPECT_THROW(run_shared_nothing(wl, 2, Scheme::Callback), WorkloadNotPartitionable);
  EXPECT_NO_THROW(run_direct_access(wl, 2, 1));
}

TEST(DirectAccess, OneWorkerOneInstanceMatchesSharedNothing) {
  Workload wl = corpus_workload(3, 30, 300, 4);
  RunConfig cfg;
  cfg.keep_final_states = true;
  const auto da = run_direct_access(wl, 1, 1, cfg);
  const auto sn = run_shared_nothing(wl, 1, Scheme::Callback, cfg);
  EXPECT_EQ(da.report.contention_events, 0u);
  EXPECT_EQ(da.final_states, sn.final_states);
  EXPECT_EQ(da.report.completed, sn.report.completed);
}

TEST(DirectAccess, ContentionWithManyWorkers) {
  RunConfig cfg;
  cfg.device = DeviceModel::desk_nvme();
  const auto da = run_direct_access(reads(16'000, 4), 8, 1, cfg).report;
  const auto sp = run_static_pool(reads(16'000, 4), 8, 1, Scheme::Callback, ExecMode::InlineCallbacks, cfg).report;
  EXPECT_GT(da.contention_events, 0u);
  EXPECT_LE(da.iops(), sp.iops());
}

TEST(DirectAccess, FullQueueBouncesToCaller) {
  RunConfig cfg;
  cfg.api.sq_entries = 4;
  cfg.api.cq_entries = 8;
  const auto r = run_direct_access(reads(2000, 8), 4, 1, cfg);
  EXPECT_GT(r.report.retries, 0u);
  EXPECT_TRUE(r.exactly_once);
}

TEST(StaticPool, MatchesLittlePrediction) {
  RunConfig cfg;
  cfg.device = DeviceModel::desk_nvme();
  const auto r = run_static_pool(reads(64'000, 8), 4, 1, Scheme::Callback, ExecMode::IoThreads, cfg).report;
  EXPECT_NEAR(r.iops() / steady_state_iops(cfg.device, 32), 1.0, 0.05);
}

TEST(StaticPool, IoThreadsHideCallbackCost) {
  // 32 workers can absorb 100 us callbacks up to 320k/s; the device caps at 160k/s.
  RunConfig cfg;
  cfg.device = DeviceModel::desk_nvme();
  cfg.device.parallelism = 16;
  const auto zero = run_static_pool(reads(20'000, 2, 0), 32, 1, Scheme::Callback, ExecMode::IoThreads, cfg).report;
  const auto heavy =
      run_static_pool(reads(20'000, 2, 100 * kMicro), 32, 1, Scheme::Callback, ExecMode::IoThreads, cfg).report;
  EXPECT_NEAR(heavy.iops() / zero.iops(), 1.0, 0.05);
}

TEST(StaticPool, InlineCallbacksCollapse) {
  RunConfig cfg;
  cfg.device = DeviceModel::desk_nvme();
  const auto r =
      run_static_pool(reads(4000, 2, 100 * kMicro), 32, 1, Scheme::Callback, ExecMode::InlineCallbacks, cfg).report;
  EXPECT_LE(r.iops(), 1e9 / (100 * kMicro));
  EXPECT_GT(r.iops(), 0.9e9 / (100 * kMicro + 300));
}

TEST(DynamicPool, ConstantLoadKeepsAllInstances) {
  RunConfig cfg;
  cfg.device = flat_device(256);
  cfg.api.sq_entries = 32;
  cfg.api.cq_entries = 64;
  ScalingConfig sc;
  sc.target_inflight_per_instance = 8;
  const auto r = run_dynamic_pool(reads(100'000, 64), 4, 4, sc, cfg).report;
  ASSERT_FALSE(r.active_instance_timeline.empty());
  for (const auto& [t, n] : r.active_instance_timeline) EXPECT_EQ(n, 4u);
}

TEST(DynamicPool, ShrinksOnTroughAndRegrows) {
  RunConfig cfg;
  cfg.device = flat_device(256);
  cfg.api.sq_entries = 32;
  cfg.api.cq_entries = 64;
  cfg.scheme = Scheme::Full;
  cfg.threads = 4;
  cfg.instances = 4;
  cfg.scaling.target_inflight_per_instance = 24;
  Workload wl = reads(1, 1);
  wl.arrivals = square_wave_arrivals(7, 1'200'000, 0.05, 50 * kMilli, 200 * kMilli);
  wl.task_count = wl.arrivals.size();
  cfg.arch = Architecture::DynamicPool;
  const auto dyn = run_workload(cfg, wl).report;
  cfg.arch = Architecture::StaticPool;
  const auto stat = run_workload(cfg, wl).report;
  std::uint32_t lo = 99;
  bool regrew = false;
  const auto& tl = dyn.active_instance_timeline;
  for (std::size_t i = 0; i < tl.size(); ++i) {
    lo = std::min(lo, tl[i].second);
    if (i > 0) {
      EXPECT_LE(std::abs(static_cast<int>(tl[i].second) - static_cast<int>(tl[i - 1].second)), 1);
      if (tl[i].second > tl[i - 1].second) regrew = true;
    }
  }
  EXPECT_EQ(lo, 1u);
  EXPECT_TRUE(regrew);
  EXPECT_EQ(dyn.inactive_deliveries, 0u);
  EXPECT_LT(dyn.poll_busy_total(), stat.poll_busy_total());
  EXPECT_EQ(stat.active_instance_timeline.size(), 1u);
}

TEST(Wrappers, ForceArchitecture) {
  const auto r = run_static_pool(reads(100, 2), 2, 2, Scheme::Coroutine, ExecMode::InlineCallbacks);
  EXPECT_EQ(r.report.per_instance.size(), 2u);
  EXPECT_GT(r.report.coroutine_resumes, 0u);
  EXPECT_GT(r.report.max_frame_bytes, 0u);
}
