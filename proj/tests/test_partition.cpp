#include <gtest/gtest.h>

#include <ringrt/corpus.hpp>
#include <ringrt/partition.hpp>

#include <deque>
#include <map>

using namespace ringrt;

namespace {

ComputeStep compute(std::uint64_t key, Nanos cost = 10) { return ComputeStep{cost, key}; }
IoStep read_io() { return IoStep{OpKind::Read, 1, OffsetMode::FromState, 0}; }

TaskSpec spec_of(std::vector<Step> steps) {
  TaskSpec s;
  s.steps = std::move(steps);
  s.initial_state.assign(16, 3);
  return s;
}

// Port that completes every submission on the next poll; records what was
// submitted.
struct ImmediatePort : TaskIoPort {
  std::map<std::uint32_t, IoRequest> pending;
  std::vector<IoRequest> submitted;
  int misses_left = 0;
  std::optional<Completion> poll_io(std::uint32_t io) override {
    if (misses_left > 0) {
      --misses_left;
      return std::nullopt;
    }
    auto it = pending.find(io);
    if (it == pending.end()) return std::nullopt;
    Completion c = synthetic_ok(it->second);
    pending.erase(it);
    return c;
  }
  void submit_io(std::uint32_t io, const IoRequest& req) override {
    pending[io] = req;
    submitted.push_back(req);
  }
};

// Walks a plan to completion the way a scheduler would.
TaskState run_plan(const TaskSpec& spec, Scheme scheme, std::uint64_t task_index, int misses_per_poll = 0,
                   std::size_t* tasklets_run = nullptr) {
  const TaskletPlan plan = make_plan(spec, scheme);
  TaskState s = initial_task_state(spec, task_index);
  ImmediatePort port;
  const TaskContext ctx{task_index, IoGeometry{}};
  std::uint32_t next = 0;
  std::size_t runs = 0;
  while (true) {
    const Tasklet& t = plan.tasklets.at(next);
    if (t.await_io) port.misses_left = misses_per_poll;
    TaskletOutcome o;
    do {
      o = run_tasklet(plan, t, s, port, ctx);
      ++runs;
    } while (o == TaskletOutcome::Respawn);
    if (o == TaskletOutcome::Done) break;
    next = t.spawn.next;
  }
  if (tasklets_run) *tasklets_run = runs;
  return s;
}

TaskState run_coroutine(const TaskSpec& spec, std::uint64_t task_index) {
  auto frame = make_coroutine(std::make_shared<TaskSpec>(spec), task_index, IoGeometry{}, 42);
  ResumeResult r = frame->resume();
  while (auto* s = std::get_if<SuspendedOnIo>(&r)) {
    Completion c = synthetic_ok(s->request);
    c.user_data = s->request.user_data;
    r = frame->resume(&c);
  }
  return std::get<FrameDone>(r).final_state;
}

}  // namespace

TEST(PartitionFull, ComputeIoCompute) {
  const auto spec = spec_of({compute(1), read_io(), compute(2)});
  const auto plan = partition_full(spec);
  ASSERT_EQ(plan.tasklets.size(), 3u);
  const auto& a = plan.tasklets[0];
  const auto& p = plan.tasklets[1];
  const auto& b = plan.tasklets[2];
  EXPECT_FALSE(a.await_io);
  EXPECT_TRUE(plan.submits(a));
  EXPECT_EQ(a.spawn, (SpawnRule{SpawnKind::Successor, 1}));
  EXPECT_TRUE(p.is_poll_only());
  EXPECT_EQ(p.spawn, (SpawnRule{SpawnKind::Successor, 2}));
  EXPECT_FALSE(b.await_io);
  EXPECT_FALSE(plan.submits(b));
  EXPECT_EQ(b.spawn.kind, SpawnKind::Done);
}

TEST(PartitionFull, PureCompute) {
  const auto plan = partition_full(spec_of({compute(1)}));
  ASSERT_EQ(plan.tasklets.size(), 1u);
  EXPECT_EQ(plan.io_count, 0u);
  EXPECT_EQ(plan.tasklets[0].spawn.kind, SpawnKind::Done);
}

TEST(PartitionFull, ThreeIosWithLeadingAndTrailingCompute) {
  const auto spec = spec_of({compute(1), read_io(), compute(2), read_io(), compute(3), read_io(), compute(4)});
  const auto plan = partition_full(spec);
  std::size_t polls = 0, computes = 0;
  for (const auto& t : plan.tasklets) (t.is_poll_only() ? polls : computes)++;
  EXPECT_EQ(polls, 3u);
  EXPECT_EQ(computes, 4u);
}

TEST(PartitionFull, PollRespawnsUntilComplete) {
  const auto spec = spec_of({compute(1), read_io(), compute(2)});
  std::size_t runs = 0;
  const auto s = run_plan(spec, Scheme::Full, 0, 3, &runs);
  EXPECT_EQ(runs, 3u + 3u);
  EXPECT_EQ(s, reference_final_state(spec, 0, IoGeometry{}));
}

TEST(PartitionCallback, FusesPollWithSuccessor) {
  const auto spec = spec_of({compute(1), read_io(), compute(2)});
  const auto plan = partition_callback(spec);
  ASSERT_EQ(plan.tasklets.size(), 2u);
  EXPECT_TRUE(plan.submits(plan.tasklets[0]));
  EXPECT_TRUE(plan.tasklets[1].await_io.has_value());
  EXPECT_TRUE(plan.tasklets[1].segment.has_value());
  EXPECT_EQ(plan.tasklets[1].spawn.kind, SpawnKind::Done);
  EXPECT_EQ(partition_callback(spec_of({compute(1)})).tasklets.size(), 1u);
}

TEST(PartitionCallback, CountRelationHoldsOverCorpus) {
  for (const auto& spec : generate_corpus(5, 500)) {
    const auto full = partition_full(spec);
    const auto cb = partition_callback(spec);
    // I/O steps that have a successor tasklet in the full partition.
    std::size_t with_successor = 0;
    for (const auto& t : full.tasklets)
      if (t.is_poll_only() && t.spawn.kind == SpawnKind::Successor) ++with_successor;
    EXPECT_EQ(cb.tasklets.size(), full.tasklets.size() - with_successor);
    EXPECT_EQ(cb.io_count, full.io_count);
  }
}

TEST(Coroutine, TwoStepWalk) {
  const auto spec = std::make_shared<TaskSpec>(spec_of({compute(1), read_io(), compute(2)}));
  auto f = make_coroutine(spec, 0, IoGeometry{}, 7);
  auto r = f->resume();
  ASSERT_TRUE(std::holds_alternative<SuspendedOnIo>(r));
  const IoRequest req = std::get<SuspendedOnIo>(r).request;
  EXPECT_EQ(req.op, OpKind::Read);
  EXPECT_EQ(req.user_data >> 24, 7u);
  Completion c = synthetic_ok(req);
  c.user_data = req.user_data;
  r = f->resume(&c);
  ASSERT_TRUE(std::holds_alternative<FrameDone>(r));
  EXPECT_TRUE(f->done());
  EXPECT_THROW(f->resume(), ResumeAfterDone);
}

TEST(Coroutine, PureComputeFinishesOnFirstResume) {
  auto f = make_coroutine(std::make_shared<TaskSpec>(spec_of({compute(1), compute(2)})), 0, IoGeometry{}, 1);
  EXPECT_TRUE(std::holds_alternative<FrameDone>(f->resume()));
}

TEST(Coroutine, RejectsForeignCompletion) {
  auto f = make_coroutine(std::make_shared<TaskSpec>(spec_of({read_io()})), 0, IoGeometry{}, 1);
  const auto r = f->resume();
  Completion c = synthetic_ok(std::get<SuspendedOnIo>(r).request);
  c.user_data = 12345;
  EXPECT_THROW(f->resume(&c), CompletionMismatch);
  EXPECT_THROW(f->resume(), CompletionMismatch);
}

TEST(Coroutine, NestedFrameIsLarger) {
  auto inner = std::make_shared<TaskSpec>(spec_of({compute(5), read_io()}));
  TaskSpec outer = spec_of({compute(1), CallStep{inner}, read_io()});
  const std::size_t inner_bytes = CoroutineFrame::frame_size_of(*inner, 16);
  const std::size_t outer_bytes = CoroutineFrame::frame_size_of(outer, 16);
  EXPECT_GE(outer_bytes, inner_bytes);
  EXPECT_GT(outer_bytes, CoroutineFrame::frame_size_of(spec_of({compute(1), read_io()}), 16));
  // Nested I/O suspends through the outer frame and resumes in order.
  EXPECT_EQ(run_coroutine(outer, 3), reference_final_state(outer, 3, IoGeometry{}));
}

TEST(Schemes, AgreeWithReferenceOverCorpus) {
  const auto corpus = generate_corpus(9, 300);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto want = reference_final_state(corpus[i], i, IoGeometry{});
    ASSERT_EQ(run_plan(corpus[i], Scheme::Full, i, static_cast<int>(i % 3)), want) << "full " << i;
    ASSERT_EQ(run_plan(corpus[i], Scheme::Callback, i), want) << "callback " << i;
    ASSERT_EQ(run_coroutine(corpus[i], i), want) << "coroutine " << i;
  }
}

TEST(Materialize, OffsetsAreAlignedAndInRange) {
  IoGeometry geo{1 << 20, 4096};
  const auto corpus = generate_corpus(3, 100);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    TaskState s = initial_task_state(corpus[i], i);
    for (const auto& seg : segment_spec(corpus[i])) {
      if (!seg.io) continue;
      const IoRequest r = materialize(*seg.io, s, i, geo);
      EXPECT_NO_THROW(validate_request(r, geo.capacity_bytes, geo.block_size));
    }
  }
  IoStep too_big{OpKind::Read, 1000, OffsetMode::Fixed, 0};
  EXPECT_THROW(materialize(too_big, TaskState(8), 0, geo), InvalidRequest);
}
