#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "executor.hpp"
#include "handle.hpp"
#include "io_pool.hpp"
#include "metrics.hpp"
#include "partition.hpp"
#include "platform.hpp"
#include "ring_core.hpp"
#include "sim_device.hpp"

namespace ringrt {

enum class Architecture : std::uint8_t { SharedNothing, DirectAccess, StaticPool, DynamicPool };
enum class ExecMode : std::uint8_t { IoThreads, InlineCallbacks };

inline const char* to_string(Architecture a) noexcept {
  switch (a) {
    case Architecture::SharedNothing: return "shared_nothing";
    case Architecture::DirectAccess: return "direct_access";
    case Architecture::StaticPool: return "static_pool";
    case Architecture::DynamicPool: return "dynamic_pool";
  }
  return "?";
}

inline const char* to_string(ExecMode m) noexcept {
  return m == ExecMode::IoThreads ? "io_threads" : "inline_callbacks";
}

class WorkloadNotPartitionable : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tasks to run. Task i uses specs[i % specs.size()]. Closed loop by default:
// every worker keeps `concurrency` of its tasks live. With `arrivals` set,
// task i is released at arrivals[i] instead (open loop).
struct Workload {
  std::vector<std::shared_ptr<const TaskSpec>> specs;
  std::size_t task_count = 0;  // 0: one task per spec
  std::size_t concurrency = 1;
  std::vector<Nanos> arrivals;
  // (a, b): task b depends on task a. Only shared-nothing inspects these, to
  // refuse workloads whose edges cross its static shards.
  std::vector<std::pair<std::size_t, std::size_t>> dependencies;
  IoGeometry geometry;

  std::size_t tasks() const noexcept { return task_count ? task_count : specs.size(); }
  bool open_loop() const noexcept { return !arrivals.empty(); }
  const std::shared_ptr<const TaskSpec>& spec_ptr(std::size_t i) const { return specs[i % specs.size()]; }
};

struct RunConfig {
  Architecture arch = Architecture::SharedNothing;
  Scheme scheme = Scheme::Callback;
  ExecMode exec_mode = ExecMode::IoThreads;
  std::uint32_t threads = 1;    // worker threads (N)
  std::uint32_t instances = 1;  // M for direct access, k for the pools
  InstanceThreading threading = InstanceThreading::SingleThread;
  DispatchPolicy policy = DispatchPolicy::RoundRobin;
  std::size_t inbox_capacity = 1024;
  std::size_t batch = 32;
  ScalingConfig scaling;
  ApiConfig api;
  DeviceModel device;
  CostModel costs;
  ClockMode clock = ClockMode::Virtual;
  bool spin_compute = false;
  std::uint64_t seed = 1;
  std::string run_id = "run";
  std::string label;
  bool keep_final_states = false;
  bool trace_device = false;
  Nanos max_virtual_time = 3600 * kSecond;
  Nanos wall_timeout = 120 * kSecond;
};

struct RunResult {
  MetricsReport report;
  std::vector<TaskState> final_states;  // by task index, when requested
  bool exactly_once = false;            // every accepted request reaped once
  std::uint64_t handles_done = 0;
  std::uint64_t requests = 0;
  std::string device_trace_csv;
};

// -- workload builders -------------------------------------------------------

// One I/O step followed by an optional compute step of `compute_ns`.
inline std::shared_ptr<const TaskSpec> io_task_spec(OpKind op, OffsetMode mode, Nanos compute_ns = 0,
                                                    std::uint32_t blocks = 1) {
  auto spec = std::make_shared<TaskSpec>();
  spec->steps.push_back(IoStep{op, blocks, mode, 0});
  if (compute_ns > 0) spec->steps.push_back(ComputeStep{compute_ns, 0x5eedULL});
  spec->initial_state.assign(16, 0);
  return spec;
}

inline Workload uniform_workload(std::shared_ptr<const TaskSpec> spec, std::size_t tasks, std::size_t concurrency,
                                 IoGeometry geo = {}) {
  Workload wl;
  wl.specs.push_back(std::move(spec));
  wl.task_count = tasks;
  wl.concurrency = concurrency;
  wl.geometry = geo;
  return wl;
}

// Poisson arrivals whose rate alternates between `peak_per_s` and
// `peak_per_s * trough_fraction` every `phase`, starting with a peak.
inline std::vector<Nanos> square_wave_arrivals(std::uint64_t seed, double peak_per_s, double trough_fraction,
                                               Nanos phase, Nanos duration) {
  if (peak_per_s <= 0.0 || trough_fraction <= 0.0 || phase <= 0) {
    throw std::invalid_argument("square wave needs positive rates and phase");
  }
  SplitMix rng(seed);
  std::vector<Nanos> out;
  double t = 0.0;
  while (true) {
    const auto ph = static_cast<std::int64_t>(t) / phase;
    const double rate = (ph % 2 == 0 ? peak_per_s : peak_per_s * trough_fraction) / 1e9;
    const double gap = -std::log(1.0 - rng.unit()) / rate;
    const double boundary = static_cast<double>((ph + 1) * phase);
    if (t + gap >= boundary) {
      // Memoryless: restart the draw at the rate change.
      t = boundary;
      if (t >= static_cast<double>(duration)) break;
      continue;
    }
    t += gap;
    if (t >= static_cast<double>(duration)) break;
    out.push_back(static_cast<Nanos>(t));
  }
  return out;
}

namespace detail {

struct Prepared {
  std::shared_ptr<const TaskSpec> spec;
  TaskletPlan plan;
  std::size_t frame_bytes = 0;
};

class Worker;

struct TaskRecord {
  std::uint64_t task_index = 0;
  const Prepared* prep = nullptr;
  TaskState state;
  std::unique_ptr<CoroutineFrame> frame;
  std::uint32_t next = 0;  // tasklet to run next
  HandlePtr io = std::make_shared<HandleState>();
  Worker* owner = nullptr;
};

enum class StepKind : std::uint8_t { Submit, Continue, Done };

struct StepOutcome {
  StepKind kind = StepKind::Continue;
  IoRequest request;
};

// Execution common to every architecture: tasklet costs and effects, task
// completion bookkeeping, and the inline-continuation hook used by the pools.
class Engine final : public Continuation {
 public:
  Engine(const RunConfig& cfg, const Workload& wl, Executor& exec) : cfg_(cfg), wl_(wl), exec_(exec) {
    std::unordered_map<const TaskSpec*, std::size_t> seen;
    for (const auto& s : wl.specs) {
      if (!s) throw std::invalid_argument("workload contains a null task spec");
      if (seen.count(s.get())) continue;
      seen.emplace(s.get(), prepared_.size());
      Prepared p;
      p.spec = s;
      p.plan = make_plan(*s, cfg.scheme);
      p.frame_bytes = CoroutineFrame::frame_size_of(*s, s->initial_state.size());
      max_frame_bytes_ = std::max<std::uint64_t>(max_frame_bytes_, p.frame_bytes);
      prepared_.push_back(std::move(p));
    }
    index_.reserve(wl.specs.size());
    for (const auto& s : wl.specs) index_.push_back(seen.at(s.get()));
    if (cfg.keep_final_states) final_states_.resize(wl.tasks());
  }

  const RunConfig& cfg() const noexcept { return cfg_; }
  const Workload& workload() const noexcept { return wl_; }
  Executor& exec() noexcept { return exec_; }
  const Prepared& prepared_for(std::uint64_t task_index) const {
    return prepared_[index_[task_index % index_.size()]];
  }

  bool pool_arch() const noexcept {
    return cfg_.arch == Architecture::StaticPool || cfg_.arch == Architecture::DynamicPool;
  }
  // Whether the thread that reaps a completion runs the task's next tasklet.
  bool reaper_continues() const noexcept {
    if (cfg_.scheme == Scheme::Full) return false;
    return !pool_arch() || cfg_.exec_mode == ExecMode::InlineCallbacks;
  }

  void set_pool(IoPool* p) noexcept { pool_ = p; }
  IoPool* pool() noexcept { return pool_; }

  Nanos submit_path_cost() const noexcept {
    switch (cfg_.arch) {
      case Architecture::SharedNothing: return cfg_.costs.submit;
      case Architecture::DirectAccess: return cfg_.costs.lock + cfg_.costs.submit;
      default: return cfg_.costs.dispatch;
    }
  }

  // Virtual CPU cost of the task's next tasklet, including its poll and the
  // submission of the I/O it ends with.
  Nanos tasklet_cost(const TaskRecord& r) const {
    const TaskletPlan& plan = r.prep->plan;
    const Tasklet& t = plan.tasklets[r.next];
    Nanos c = cfg_.costs.tasklet_overhead + plan.cost_of(t);
    if (t.await_io) c += cfg_.costs.handle_poll;
    if (cfg_.scheme == Scheme::Coroutine) {
      c += cfg_.costs.resume_base + static_cast<Nanos>(r.prep->frame_bytes / 64) * cfg_.costs.frame_byte_cost_per_64;
    }
    if (plan.submits(t)) c += submit_path_cost();
    return c;
  }

  bool next_awaits(const TaskRecord& r) const { return r.prep->plan.tasklets[r.next].await_io.has_value(); }

  void start_task(TaskRecord& r, std::uint64_t task_index, Worker* owner) {
    r.task_index = task_index;
    r.prep = &prepared_for(task_index);
    r.next = 0;
    r.owner = owner;
    if (cfg_.scheme == Scheme::Coroutine) {
      r.frame = make_coroutine(r.prep->spec, task_index, wl_.geometry, task_index);
      r.state.clear();
    } else {
      r.frame.reset();
      r.state = initial_task_state(*r.prep->spec, task_index);
    }
  }

  // Runs the task's next tasklet. `c` is the completion it awaits, if any.
  StepOutcome execute(TaskRecord& r, const Completion* c) {
    const TaskletPlan& plan = r.prep->plan;
    const Tasklet& t = plan.tasklets[r.next];
    tasklets_run_.fetch_add(1, std::memory_order_relaxed);
    exec_.burn(plan.cost_of(t));
    StepOutcome out;
    if (cfg_.scheme == Scheme::Coroutine) {
      coroutine_resumes_.fetch_add(1, std::memory_order_relaxed);
      auto res = r.frame->resume(r.next == 0 ? nullptr : c);
      if (auto* s = std::get_if<SuspendedOnIo>(&res)) {
        out.kind = StepKind::Submit;
        out.request = s->request;
        ++r.next;
      } else {
        r.state = std::move(std::get<FrameDone>(res).final_state);
        out.kind = StepKind::Done;
      }
      return out;
    }
    if (t.await_io) {
      if (!c) throw std::logic_error("tasklet awaiting I/O run without a completion");
      apply_io_result(r.state, plan.segments[*t.await_io].io->op, *c);
    }
    if (t.segment) {
      const Segment& seg = plan.segments[*t.segment];
      for (const auto& step : seg.computes) apply_compute(r.state, step);
      if (seg.io) {
        out.kind = StepKind::Submit;
        out.request = materialize(*seg.io, r.state, r.task_index, wl_.geometry);
        out.request.user_data = r.task_index;
      }
    }
    if (t.spawn.kind == SpawnKind::Successor) {
      r.next = t.spawn.next;
    } else if (out.kind != StepKind::Submit) {
      out.kind = StepKind::Done;
    }
    return out;
  }

  // Prepares the task's handle for a new request.
  void arm_handle(TaskRecord& r, const IoRequest& req, ActorId waiter) {
    HandleState& h = *r.io;
    h.reset(next_handle_.fetch_add(1, std::memory_order_relaxed), req);
    h.executor = &exec_;
    h.context = &r;
    h.waiter = reaper_continues() ? kNoActor : waiter;
    h.continuation = pool_arch() && reaper_continues() ? this : nullptr;
  }

  void finish(TaskRecord& r, Worker* by);

  // Continuation interface (pool inline-callback mode).
  Nanos inline_cost(const HandleState& h) const override {
    return cfg_.costs.handle_poll + tasklet_cost(*static_cast<const TaskRecord*>(h.context));
  }
  void run_inline(HandleState& h, ActorId reaper, Nanos now) override;

  std::uint64_t tasks_done() const noexcept { return tasks_done_.load(std::memory_order_acquire); }
  std::uint64_t handles_armed() const noexcept { return next_handle_.load(std::memory_order_acquire); }
  std::vector<TaskState>& final_states() noexcept { return final_states_; }

  void fold_into(MetricsReport& r) const {
    r.tasks_completed += tasks_done();
    r.tasklets_run += tasklets_run_.load(std::memory_order_relaxed);
    r.coroutine_resumes += coroutine_resumes_.load(std::memory_order_relaxed);
    r.callback_placement_violations += placement_violations_.load(std::memory_order_relaxed);
    r.cross_thread_msgs += cross_thread_.load(std::memory_order_relaxed);
    if (cfg_.scheme == Scheme::Coroutine) r.max_frame_bytes = std::max(r.max_frame_bytes, max_frame_bytes_);
  }

  void note_placement(bool ok) {
    if (!ok) placement_violations_.fetch_add(1, std::memory_order_relaxed);
  }
  void note_cross_thread() { cross_thread_.fetch_add(1, std::memory_order_relaxed); }

 private:
  const RunConfig& cfg_;
  const Workload& wl_;
  Executor& exec_;
  IoPool* pool_ = nullptr;
  std::vector<Prepared> prepared_;
  std::vector<std::size_t> index_;
  std::vector<TaskState> final_states_;
  std::uint64_t max_frame_bytes_ = 0;
  std::atomic<std::uint64_t> tasks_done_{0};
  std::atomic<std::uint64_t> tasklets_run_{0};
  std::atomic<std::uint64_t> coroutine_resumes_{0};
  std::atomic<std::uint64_t> next_handle_{0};
  std::atomic<std::uint64_t> placement_violations_{0};
  std::atomic<std::uint64_t> cross_thread_{0};
};

// One ApiInstance shared by every worker in the direct-access architecture.
// SQ and CQ each sit behind their own mutex; in virtual time the lock is
// modelled by the instant it frees up.
struct SharedInstance {
  ApiInstance* api = nullptr;
  std::unique_ptr<SlotTable<TaskRecord*>> slots;
  DeliveryLedger ledger;
  std::mutex sq_mu;
  std::mutex cq_mu;
  Nanos sq_free_at = 0;
  Nanos cq_free_at = 0;
  std::size_t sq_holder = SIZE_MAX;  // last worker to take the lock
  std::size_t cq_holder = SIZE_MAX;
  Nanos sq_busy = 0;
  Nanos cq_busy = 0;
  std::uint64_t submitted = 0;
};

// A user-space worker thread: runs tasklets from its ready queue and, outside
// the pools, also submits to and reaps from ApiInstances itself.
class Worker final : public Actor {
 public:
  Worker(Engine& engine, std::uint32_t index, std::uint32_t n_workers)
      : engine_(engine), index_(index), n_workers_(n_workers) {}

  std::uint32_t index() const noexcept { return index_; }
  ActorId id() const noexcept { return self_; }
  void set_id(ActorId id) noexcept { self_ = id; }

  void use_private_instance(ApiInstance& api) {
    own_ = &api;
    own_slots_ = std::make_unique<SlotTable<TaskRecord*>>(api.config().cq_entries);
  }
  void use_shared_instances(std::vector<std::unique_ptr<SharedInstance>>* shared) { shared_ = shared; }

  ApiInstance* private_instance() const noexcept { return own_; }
  const DeliveryLedger& ledger() const noexcept { return own_ledger_; }
  const MetricsReport& stats() const noexcept { return stats_; }
  Nanos busy() const noexcept { return busy_; }
  Nanos io_busy() const noexcept { return io_busy_; }

  // Open loop: hands over a newly arrived task (any thread).
  void push_arrival(std::uint64_t task_index) {
    {
      std::lock_guard lock(mu_);
      arrivals_.push_back(task_index);
    }
    pending_.fetch_add(1, std::memory_order_release);
    engine_.exec().wake(self_);
  }

  // A task this worker started has finished on another thread.
  void remote_finish(TaskRecord* r) {
    {
      std::lock_guard lock(mu_);
      finished_elsewhere_.push_back(r);
    }
    pending_.fetch_add(1, std::memory_order_release);
    engine_.exec().wake(self_);
  }

  void local_finish(TaskRecord* r) {
    free_.push_back(r);
    --live_;
  }

  std::optional<Nanos> begin(Nanos now) override {
    begin_at_ = now;
    job_ = Job{};
    if (idled_) {
      misses_ = 0;
      idled_ = false;
    }
    absorb_mailbox();
    refill();
    // A completion that landed during the last miss woke a busy actor, which
    // is a no-op; catch it here instead of idling on it.
    if (!ready_.empty() && misses_ >= ready_.size() && any_ready_done()) misses_ = 0;

    // Reaping and tasklets alternate; otherwise a burst of completions holds
    // back every resubmission behind the whole burst.
    const bool reap_first = !after_reap_ || ready_.empty() || misses_ >= ready_.size();
    after_reap_ = false;
    if (reap_first) {
      if (Nanos c = prepare_reap(now); c > 0) {
        after_reap_ = true;
        return charge(c);
      }
    }
    if (!bounced_.empty() && room_hint()) {
      job_.kind = JobKind::Retry;
      misses_ = 0;
      return charge(engine_.submit_path_cost());
    }
    if (!ready_.empty() && misses_ < ready_.size()) {
      TaskRecord* r = ready_.front();
      ready_.pop_front();
      job_.task = r;
      if (engine_.next_awaits(*r) && r->io->poll() != HandleStatus::Done) {
        job_.kind = JobKind::Miss;
        ++misses_;
        ++stats_.poll_misses;
        return charge(engine_.cfg().costs.tasklet_overhead + engine_.cfg().costs.handle_poll);
      }
      job_.kind = JobKind::Tasklet;
      misses_ = 0;
      return charge(engine_.tasklet_cost(*r));
    }
    if (!reap_first) {
      if (Nanos c = prepare_reap(now); c > 0) {
        after_reap_ = true;
        return charge(c);
      }
    }
    idled_ = true;
    return std::nullopt;
  }

  void end(Nanos now) override {
    switch (job_.kind) {
      case JobKind::None: break;
      case JobKind::Reap: finish_reap(now); break;
      case JobKind::Retry: retry_front(now); break;
      case JobKind::Miss: ready_.push_back(job_.task); break;
      case JobKind::Tasklet: {
        TaskRecord* r = job_.task;
        const bool awaited = engine_.next_awaits(*r);
        const Completion* c = awaited ? &r->io->completion : nullptr;
        if (awaited && engine_.cfg().scheme != Scheme::Full) engine_.note_placement(true);
        run_and_route(*r, c, now);
        break;
      }
    }
    busy_ += engine_.exec().virtual_time() ? job_cost_ : now - begin_at_;
    job_ = Job{};
  }

  // Runs a tasklet whose inputs are available, then routes the task.
  void run_and_route(TaskRecord& r, const Completion* c, Nanos now) {
    const StepOutcome out = engine_.execute(r, c);
    switch (out.kind) {
      case StepKind::Submit:
        engine_.arm_handle(r, out.request, self_);
        submit(r, now);
        if (!engine_.reaper_continues()) ready_.push_back(&r);
        break;
      case StepKind::Continue: ready_.push_back(&r); break;
      case StepKind::Done: engine_.finish(r, this); break;
    }
  }

 private:
  enum class JobKind : std::uint8_t { None, Reap, Retry, Miss, Tasklet };
  struct Reaped {
    Completion c;
    TaskRecord* task;
  };
  struct Job {
    JobKind kind = JobKind::None;
    TaskRecord* task = nullptr;
  };

  Nanos charge(Nanos c) {
    c += debt_;
    debt_ = 0;
    job_cost_ = std::max<Nanos>(1, c);
    return c;
  }

  bool any_ready_done() const {
    for (const TaskRecord* r : ready_)
      if (r->io->poll() == HandleStatus::Done) return true;
    return false;
  }

  void absorb_mailbox() {
    if (pending_.load(std::memory_order_acquire) == 0) return;
    std::lock_guard lock(mu_);
    pending_.store(0, std::memory_order_relaxed);
    for (TaskRecord* r : finished_elsewhere_) local_finish(r);
    finished_elsewhere_.clear();
    while (!arrivals_.empty()) {
      start(arrivals_.front());
      arrivals_.pop_front();
    }
  }

  void refill() {
    if (engine_.workload().open_loop()) return;
    const std::size_t total = engine_.workload().tasks();
    while (live_ < engine_.workload().concurrency) {
      const std::uint64_t idx = index_ + next_local_ * static_cast<std::uint64_t>(n_workers_);
      if (idx >= total) break;
      ++next_local_;
      start(idx);
    }
  }

  void start(std::uint64_t task_index) {
    TaskRecord* r;
    if (!free_.empty()) {
      r = free_.back();
      free_.pop_back();
    } else {
      records_.push_back(std::make_unique<TaskRecord>());
      r = records_.back().get();
    }
    engine_.start_task(*r, task_index, this);
    ++live_;
    misses_ = 0;
    ready_.push_back(r);
  }

  // -- submission paths ------------------------------------------------------

  bool room_hint() {
    if (own_) return own_->push_room() > 0;
    if (shared_) {
      for (auto& s : *shared_)
        if (s->api->push_room_hint() > 0) return true;
      return false;
    }
    return true;
  }

  void submit(TaskRecord& r, Nanos now) {
    if (engine_.pool()) {
      engine_.pool()->dispatch(r.io);
      return;
    }
    if (!bounced_.empty() || !try_push(r, now)) {
      bounced_.push_back(&r);
      ++stats_.retries;
    }
  }

  void retry_front(Nanos now) {
    while (!bounced_.empty()) {
      if (!try_push(*bounced_.front(), now)) {
        ++stats_.retries;
        return;
      }
      bounced_.pop_front();
    }
  }

  bool try_push(TaskRecord& r, Nanos now) {
    const CostModel& k = engine_.cfg().costs;
    if (own_) {
      if (own_->push_room() == 0) return false;
      IoRequest req = r.io->request;
      const auto slot = own_slots_->acquire(&r);
      req.user_data = *slot;
      if (!own_->sq_push(req, now).accepted()) throw std::logic_error("private SQ refused a checked push");
      r.io->mark_submitted();
      ++stats_.submitted;
      io_busy_ += k.submit;
      own_sq_.touch(self_, stats_.sq_producer_violations);
      return true;
    }
    auto& insts = *shared_;
    const std::size_t m = insts.size();
    for (std::size_t attempt = 0; attempt < m; ++attempt) {
      SharedInstance& s = *insts[(index_ + submit_seq_ + attempt) % m];
      const Nanos hold = k.lock + k.submit;
      debt_ += lock_wait(s.sq_mu, s.sq_free_at, s.sq_holder, now - hold, hold);
      bool ok = false;
      if (s.api->push_room() > 0) {
        IoRequest req = r.io->request;
        const auto slot = s.slots->acquire(&r);
        req.user_data = *slot;
        ok = s.api->sq_push(req, now).accepted();
        if (!ok) throw std::logic_error("shared SQ refused a checked push");
        ++s.submitted;
        s.sq_busy += k.submit;
      }
      s.sq_mu.unlock();
      if (ok) {
        ++submit_seq_;
        r.io->mark_submitted();
        ++stats_.submitted;
        return true;
      }
    }
    return false;
  }

  // Locks `mu`. Virtual time: the lock is busy until `free_at`; another
  // worker arriving earlier waits (a contention event) and the wait is
  // returned. A worker never waits on its own previous hold.
  Nanos lock_wait(std::mutex& mu, Nanos& free_at, std::size_t& holder, Nanos at, Nanos hold) {
    if (engine_.exec().virtual_time()) {
      mu.lock();
      if (holder == index_) free_at = std::min(free_at, at);
      holder = index_;
      const Nanos wait = std::max<Nanos>(0, free_at - at);
      if (wait > 0) ++stats_.contention_events;
      free_at = std::max(free_at, at) + hold;
      return wait;
    }
    if (!mu.try_lock()) {
      ++stats_.contention_events;
      mu.lock();
    }
    return 0;
  }

  // -- reaping -----------------------------------------------------------------

  Nanos prepare_reap(Nanos now) {
    const CostModel& k = engine_.cfg().costs;
    reaped_.clear();
    const std::size_t batch = engine_.cfg().batch;
    if (own_) {
      if (!own_->cq_ready()) return 0;
      buf_.resize(batch);
      const std::size_t n = own_->cq_reap(std::span<Completion>(buf_.data(), batch));
      own_cq_.touch(self_, stats_.cq_consumer_violations);
      for (std::size_t i = 0; i < n; ++i) {
        own_ledger_.record(buf_[i].request_id);
        reaped_.push_back({buf_[i], own_slots_->release(static_cast<std::uint32_t>(buf_[i].user_data))});
      }
      io_busy_ += static_cast<Nanos>(n) * k.reap;
    } else if (shared_) {
      auto& insts = *shared_;
      for (std::size_t a = 0; a < insts.size() && reaped_.empty(); ++a) {
        SharedInstance& s = *insts[(reap_cursor_ + a) % insts.size()];
        if (!s.api->cq_nonempty_hint()) continue;
        reap_cursor_ = (reap_cursor_ + a + 1) % insts.size();
        const Nanos wait = lock_wait(s.cq_mu, s.cq_free_at, s.cq_holder, now, k.lock);
        buf_.resize(batch);
        const std::size_t n = s.api->cq_reap(std::span<Completion>(buf_.data(), batch));
        for (std::size_t i = 0; i < n; ++i) {
          s.ledger.record(buf_[i].request_id);
          reaped_.push_back({buf_[i], s.slots->release(static_cast<std::uint32_t>(buf_[i].user_data))});
        }
        if (engine_.exec().virtual_time()) s.cq_free_at += static_cast<Nanos>(n) * k.reap;
        s.cq_busy += static_cast<Nanos>(n) * k.reap;
        s.cq_mu.unlock();
        debt_ += wait + k.lock;
      }
    }
    if (reaped_.empty()) return 0;
    job_.kind = JobKind::Reap;
    misses_ = 0;
    Nanos c = static_cast<Nanos>(reaped_.size()) * k.reap;
    if (engine_.reaper_continues()) {
      for (const auto& rc : reaped_) c += engine_.tasklet_cost(*rc.task);
    }
    return c;
  }

  void finish_reap(Nanos now) {
    for (auto& rc : reaped_) {
      TaskRecord& r = *rc.task;
      Completion c = rc.c;
      c.user_data = r.io->request.user_data;
      stats_.record_completion(c.submit_time, c.complete_time, c.ok(), c.status == CompletionStatus::Canceled);
      if (r.owner != this) engine_.note_cross_thread();
      if (!r.io->complete(c, self_)) {
        ++stats_.double_completions;
        continue;
      }
      if (engine_.reaper_continues()) {
        engine_.note_placement(r.io->reaper == self_);
        run_and_route(r, &r.io->completion, now);
      }
    }
    reaped_.clear();
  }

  Engine& engine_;
  std::uint32_t index_;
  std::uint32_t n_workers_;
  ActorId self_ = kNoActor;

  ApiInstance* own_ = nullptr;
  std::unique_ptr<SlotTable<TaskRecord*>> own_slots_;
  DeliveryLedger own_ledger_;
  SideOwner own_sq_;
  SideOwner own_cq_;
  std::vector<std::unique_ptr<SharedInstance>>* shared_ = nullptr;
  std::size_t submit_seq_ = 0;
  std::size_t reap_cursor_ = 0;

  std::deque<TaskRecord*> ready_;
  std::deque<TaskRecord*> bounced_;
  std::vector<std::unique_ptr<TaskRecord>> records_;
  std::vector<TaskRecord*> free_;
  std::size_t live_ = 0;
  std::uint64_t next_local_ = 0;

  std::mutex mu_;
  std::atomic<std::uint64_t> pending_{0};
  std::deque<std::uint64_t> arrivals_;
  std::vector<TaskRecord*> finished_elsewhere_;

  std::vector<Completion> buf_;
  std::vector<Reaped> reaped_;
  Job job_;
  Nanos job_cost_ = 0;
  Nanos debt_ = 0;
  Nanos begin_at_ = 0;
  Nanos busy_ = 0;
  Nanos io_busy_ = 0;
  std::size_t misses_ = 0;
  bool idled_ = false;
  bool after_reap_ = false;
  MetricsReport stats_;
};

inline void Engine::finish(TaskRecord& r, Worker* by) {
  if (cfg_.keep_final_states) final_states_[r.task_index] = r.state;
  Worker* owner = r.owner;
  if (owner == by) {
    owner->local_finish(&r);
  } else {
    note_cross_thread();
    owner->remote_finish(&r);
  }
  tasks_done_.fetch_add(1, std::memory_order_acq_rel);
}

inline void Engine::run_inline(HandleState& h, ActorId reaper, Nanos) {
  auto& r = *static_cast<TaskRecord*>(h.context);
  note_placement(h.reaper == reaper);
  const StepOutcome out = execute(r, &h.completion);
  switch (out.kind) {
    case StepKind::Submit:
      arm_handle(r, out.request, kNoActor);
      pool_->dispatch(r.io);
      break;
    case StepKind::Continue:
      throw std::logic_error("inline continuation produced a standalone tasklet");
    case StepKind::Done:
      finish(r, nullptr);
      break;
  }
}

// Releases open-loop tasks to workers at their arrival times.
class ArrivalSource final : public EventTarget, public Actor {
 public:
  ArrivalSource(const Workload& wl, std::vector<std::unique_ptr<Worker>>& workers)
      : wl_(wl), workers_(workers) {}

  void arm(VirtualClock& clock) {
    clock_ = &clock;
    if (next_ < wl_.arrivals.size()) clock.schedule(wl_.arrivals[next_], this);
  }

  void on_event(Nanos now, std::uint64_t) override {
    deliver_due(now);
    if (next_ < wl_.arrivals.size()) clock_->schedule(wl_.arrivals[next_], this);
  }

  std::optional<Nanos> begin(Nanos now) override {
    if (next_ >= wl_.arrivals.size() || wl_.arrivals[next_] > now) return std::nullopt;
    deliver_due(now);
    return 0;
  }
  void end(Nanos) override {}

 private:
  void deliver_due(Nanos now) {
    while (next_ < wl_.arrivals.size() && wl_.arrivals[next_] <= now) {
      workers_[next_ % workers_.size()]->push_arrival(next_);
      ++next_;
    }
  }

  const Workload& wl_;
  std::vector<std::unique_ptr<Worker>>& workers_;
  VirtualClock* clock_ = nullptr;
  std::size_t next_ = 0;
};

inline void check_run(const RunConfig& cfg, const Workload& wl) {
  if (wl.specs.empty()) throw std::invalid_argument("workload has no task specs");
  if (wl.tasks() == 0) throw std::invalid_argument("workload has no tasks");
  if (wl.concurrency == 0 && !wl.open_loop()) throw std::invalid_argument("concurrency must be >= 1");
  if (wl.open_loop() && wl.arrivals.size() != wl.tasks()) {
    throw std::invalid_argument("open-loop workload needs one arrival time per task");
  }
  if (!std::is_sorted(wl.arrivals.begin(), wl.arrivals.end())) throw std::invalid_argument("arrivals must be sorted");
  if (cfg.threads == 0) throw std::invalid_argument("at least one worker thread required");
  if (cfg.instances == 0) throw std::invalid_argument("at least one I/O instance required");
  if (wl.geometry.capacity_bytes != cfg.device.capacity_bytes || wl.geometry.block_size != cfg.device.block_size) {
    throw std::invalid_argument("workload geometry does not match the device");
  }
  auto v = ring_config_violations(cfg.api);
  if (!v.empty()) throw std::invalid_argument("api: " + v.front());
  if (cfg.arch == Architecture::SharedNothing) {
    for (const auto& [a, b] : wl.dependencies) {
      if (a % cfg.threads != b % cfg.threads) {
        throw WorkloadNotPartitionable("dependency " + std::to_string(a) + " -> " + std::to_string(b) +
                                       " crosses shards");
      }
    }
  }
}

}  // namespace detail

// Runs `wl` under the architecture, scheme and execution mode in `cfg` on a
// simulated device and returns merged metrics.
inline RunResult run_workload(const RunConfig& cfg_in, const Workload& wl) {
  RunConfig cfg = cfg_in;
  if (cfg.arch == Architecture::DynamicPool) cfg.scaling.enabled = true;
  if (cfg.arch == Architecture::StaticPool) cfg.scaling.enabled = false;
  detail::check_run(cfg, wl);

  SimPlatform platform(cfg.device, cfg.seed, cfg.clock, cfg.spin_compute);
  if (cfg.trace_device) platform.device().enable_trace();
  detail::Engine engine(cfg, wl, platform.exec());

  std::vector<std::unique_ptr<detail::Worker>> workers;
  for (std::uint32_t w = 0; w < cfg.threads; ++w) {
    workers.push_back(std::make_unique<detail::Worker>(engine, w, cfg.threads));
    workers.back()->set_id(platform.add_actor(workers.back().get()));
  }

  std::vector<std::unique_ptr<detail::SharedInstance>> shared;
  std::unique_ptr<IoPool> pool;
  std::vector<ActorId> all_workers;
  for (auto& w : workers) all_workers.push_back(w->id());

  switch (cfg.arch) {
    case Architecture::SharedNothing:
      for (auto& w : workers) {
        ApiInstance& api = platform.add_instance(cfg.api);
        w->use_private_instance(api);
        platform.on_completion(api, {w->id()});
      }
      break;
    case Architecture::DirectAccess:
      for (std::uint32_t i = 0; i < cfg.instances; ++i) {
        auto s = std::make_unique<detail::SharedInstance>();
        s->api = &platform.add_instance(cfg.api);
        s->slots = std::make_unique<SlotTable<detail::TaskRecord*>>(cfg.api.cq_entries);
        platform.on_completion(*s->api, all_workers);
        shared.push_back(std::move(s));
      }
      for (auto& w : workers) w->use_shared_instances(&shared);
      break;
    case Architecture::StaticPool:
    case Architecture::DynamicPool: {
      PoolConfig pc;
      pc.instances = cfg.instances;
      pc.threading = cfg.threading;
      pc.policy = cfg.policy;
      pc.inbox_capacity = cfg.inbox_capacity;
      pc.batch = cfg.batch;
      pc.api = cfg.api;
      pc.scaling = cfg.scaling;
      pc.costs = cfg.costs;
      pool = std::make_unique<IoPool>(pc, platform, cfg.run_id);
      engine.set_pool(pool.get());
      break;
    }
  }

  detail::ArrivalSource arrivals(wl, workers);
  if (wl.open_loop()) {
    if (auto* v = platform.virtual_executor()) {
      arrivals.arm(v->clock());
    } else {
      platform.add_actor(&arrivals);
    }
  }

  const std::uint64_t total = wl.tasks();
  if (auto* v = platform.virtual_executor()) {
    for (auto& w : workers) v->wake(w->id());
  }
  platform.start();
  const Nanos limit = cfg.clock == ClockMode::Virtual ? cfg.max_virtual_time : cfg.wall_timeout;
  const bool finished = platform.run_until([&] { return engine.tasks_done() >= total; }, limit);
  const Nanos end = platform.now();
  if (pool) {
    try {
      pool->drain_and_shutdown(cfg.clock == ClockMode::Virtual ? 0 : kSecond);
    } catch (const TimeoutExceeded&) {
      if (finished) throw;
    }
  }
  platform.stop();
  if (!finished) {
    throw std::runtime_error("run " + cfg.run_id + " did not finish: " + std::to_string(engine.tasks_done()) + "/" +
                             std::to_string(total) + " tasks");
  }

  RunResult out;
  MetricsReport& r = out.report;
  r.run_id = cfg.run_id;
  r.label = cfg.label;
  r.window_start = 0;
  r.window_end = end;
  SimDevice& dev = platform.device();
  dev.settle_poll_threads(end);
  const Nanos elapsed = std::max<Nanos>(1, end);

  std::vector<MetricsReport> parts;
  for (auto& w : workers) {
    MetricsReport p = w->stats();
    p.run_id = cfg.run_id;
    p.window_end = end;
    parts.push_back(std::move(p));
  }
  parts.push_back(r);
  r = merge(parts);
  r.label = cfg.label;
  r.window_start = 0;
  r.window_end = end;

  bool once = true;
  std::uint64_t requests = 0;
  switch (cfg.arch) {
    case Architecture::SharedNothing:
      for (auto& w : workers) {
        ApiInstance& api = *w->private_instance();
        InstanceMetrics m;
        m.id = w->index();
        m.utilization = std::min(1.0, static_cast<double>(w->busy()) / static_cast<double>(elapsed));
        m.io_busy_ns = w->io_busy();
        m.poll_busy_ns = dev.poll_busy_ns(api.id(), end);
        m.requests = api.accepted();
        r.per_instance.push_back(m);
        once = once && w->ledger().exactly_once(api.accepted()) && api.delivered() == api.reaped();
        requests += api.accepted();
      }
      r.active_instance_timeline = {{0, cfg.threads}};
      break;
    case Architecture::DirectAccess:
      for (std::size_t i = 0; i < shared.size(); ++i) {
        auto& s = *shared[i];
        InstanceMetrics m;
        m.id = static_cast<InstanceId>(i);
        m.io_busy_ns = s.sq_busy + s.cq_busy;
        m.utilization = std::min(1.0, static_cast<double>(m.io_busy_ns) / static_cast<double>(elapsed));
        m.poll_busy_ns = dev.poll_busy_ns(s.api->id(), end);
        m.requests = s.api->accepted();
        r.per_instance.push_back(m);
        once = once && s.ledger.exactly_once(s.api->accepted()) && s.api->delivered() == s.api->reaped();
        requests += s.api->accepted();
      }
      r.active_instance_timeline = {{0, cfg.instances}};
      break;
    default: {
      MetricsReport pr;
      pr.run_id = cfg.run_id;
      pr.window_end = end;
      pool->collect(pr, end);
      const MetricsReport both[] = {r, pr};
      r = merge(both);
      r.active_instance_timeline = pr.active_instance_timeline;
      once = pool->exactly_once() && pool->double_completions() == 0;
      for (std::uint32_t i = 0; i < pool->instance_count(); ++i) requests += pool->api(i).accepted();
      break;
    }
  }
  engine.fold_into(r);
  r.window_start = 0;
  r.window_end = end;
  out.exactly_once = once && r.double_completions == 0 && r.conserved() && r.submitted == requests;
  out.requests = requests;
  out.handles_done = r.completed + r.canceled + r.errored;
  if (cfg.keep_final_states) out.final_states = std::move(engine.final_states());
  if (cfg.trace_device) out.device_trace_csv = dev.trace_csv();
  return out;
}

inline RunResult run_shared_nothing(const Workload& wl, std::uint32_t n_threads, Scheme scheme, RunConfig cfg = {}) {
  cfg.arch = Architecture::SharedNothing;
  cfg.threads = n_threads;
  cfg.scheme = scheme;
  return run_workload(cfg, wl);
}

inline RunResult run_direct_access(const Workload& wl, std::uint32_t n_workers, std::uint32_t m_instances,
                                   RunConfig cfg = {}) {
  cfg.arch = Architecture::DirectAccess;
  cfg.threads = n_workers;
  cfg.instances = m_instances;
  return run_workload(cfg, wl);
}

inline RunResult run_static_pool(const Workload& wl, std::uint32_t n_workers, std::uint32_t k_instances, Scheme scheme,
                                 ExecMode mode, RunConfig cfg = {}) {
  cfg.arch = Architecture::StaticPool;
  cfg.threads = n_workers;
  cfg.instances = k_instances;
  cfg.scheme = scheme;
  cfg.exec_mode = mode;
  return run_workload(cfg, wl);
}

inline RunResult run_dynamic_pool(const Workload& wl, std::uint32_t n_workers, std::uint32_t k_instances,
                                  ScalingConfig controller, RunConfig cfg = {}) {
  cfg.arch = Architecture::DynamicPool;
  cfg.threads = n_workers;
  cfg.instances = k_instances;
  cfg.scaling = controller;
  cfg.scaling.enabled = true;
  return run_workload(cfg, wl);
}

}  // namespace ringrt
