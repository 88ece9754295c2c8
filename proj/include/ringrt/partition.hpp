#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "ring_core.hpp"
#include "types.hpp"

namespace ringrt {

// -- task model --------------------------------------------------------------

using TaskState = std::vector<std::uint8_t>;

// Pure keyed transform of the task state; cost_ns is what it charges to the
// executing thread.
struct ComputeStep {
  Nanos cost_ns = 0;
  std::uint64_t key = 0;
  bool operator==(const ComputeStep&) const = default;
};

enum class OffsetMode : std::uint8_t { FromState, Sequential, Fixed };

// Request template. With FromState the offset is derived from the state left
// by the previous steps.
struct IoStep {
  OpKind op = OpKind::Read;
  std::uint32_t blocks = 1;
  OffsetMode offset_mode = OffsetMode::FromState;
  std::uint64_t fixed_offset = 0;
  bool operator==(const IoStep&) const = default;
};

struct TaskSpec;

// A compute step that owns a nested sub-task (a callee coroutine).
struct CallStep {
  std::shared_ptr<const TaskSpec> sub;
};

using Step = std::variant<ComputeStep, IoStep, CallStep>;

struct TaskSpec {
  TaskId task_id = 0;
  std::vector<Step> steps;
  TaskState initial_state;
};

inline bool operator==(const TaskSpec& a, const TaskSpec& b);

inline bool operator==(const CallStep& a, const CallStep& b) {
  if (!a.sub || !b.sub) return a.sub == b.sub;
  return *a.sub == *b.sub;
}

inline bool operator==(const TaskSpec& a, const TaskSpec& b) {
  return a.task_id == b.task_id && a.steps == b.steps && a.initial_state == b.initial_state;
}

struct IoGeometry {
  std::uint64_t capacity_bytes = std::uint64_t{1} << 30;
  std::uint32_t block_size = kDefaultBlockSize;
};

inline std::uint64_t state_digest(const TaskState& s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : s) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void apply_compute(TaskState& s, const ComputeStep& step) noexcept {
  std::uint64_t carry = step.key;
  for (std::size_t i = 0; i < s.size(); i += 8) {
    const std::size_t n = std::min<std::size_t>(8, s.size() - i);
    std::uint64_t w = 0;
    std::memcpy(&w, s.data() + i, n);
    w = mix64(w ^ carry);
    carry = w;
    std::memcpy(s.data() + i, &w, n);
  }
}

inline void apply_io_result(TaskState& s, OpKind op, const Completion& c) noexcept {
  const std::uint64_t key = mix64(static_cast<std::uint64_t>(op) | (static_cast<std::uint64_t>(c.status) << 8) |
                                  (static_cast<std::uint64_t>(c.bytes) << 16) | (0x10ULL << 56));
  apply_compute(s, ComputeStep{0, key});
}

inline TaskState initial_task_state(const TaskSpec& spec, std::uint64_t task_index) {
  TaskState s = spec.initial_state;
  apply_compute(s, ComputeStep{0, mix64(task_index ^ 0x7a5cULL)});
  return s;
}

inline IoRequest materialize(const IoStep& step, const TaskState& s, std::uint64_t task_index, const IoGeometry& geo) {
  IoRequest r;
  r.op = step.op;
  if (step.op == OpKind::Fsync || step.op == OpKind::Nop) return r;
  const std::uint64_t total_blocks = geo.capacity_bytes / geo.block_size;
  if (step.blocks == 0 || step.blocks > total_blocks) throw InvalidRequest("io step block count out of range");
  const std::uint64_t slots = total_blocks - step.blocks + 1;
  std::uint64_t block = 0;
  switch (step.offset_mode) {
    case OffsetMode::FromState: block = state_digest(s) % slots; break;
    case OffsetMode::Sequential: block = (task_index * step.blocks) % slots; break;
    case OffsetMode::Fixed: block = (step.fixed_offset / geo.block_size) % slots; break;
  }
  r.offset = block * geo.block_size;
  r.length = step.blocks * geo.block_size;
  return r;
}

// Synthetic success the simulated device would produce for `req`.
inline Completion synthetic_ok(const IoRequest& req) {
  Completion c;
  c.status = CompletionStatus::Ok;
  c.bytes = req.length;
  return c;
}

// Direct recursive walk of the spec with every I/O succeeding immediately.
// This is the reference the three partitioning schemes must agree with.
inline void reference_walk(const TaskSpec& spec, TaskState& s, std::uint64_t task_index, const IoGeometry& geo) {
  for (const auto& step : spec.steps) {
    if (const auto* c = std::get_if<ComputeStep>(&step)) {
      apply_compute(s, *c);
    } else if (const auto* io = std::get_if<IoStep>(&step)) {
      const IoRequest req = materialize(*io, s, task_index, geo);
      apply_io_result(s, io->op, synthetic_ok(req));
    } else {
      reference_walk(*std::get<CallStep>(step).sub, s, task_index, geo);
    }
  }
}

inline TaskState reference_final_state(const TaskSpec& spec, std::uint64_t task_index, const IoGeometry& geo) {
  TaskState s = initial_task_state(spec, task_index);
  reference_walk(spec, s, task_index, geo);
  return s;
}

// -- tasklet plans -------------------------------------------------------------

enum class Scheme : std::uint8_t { Full, Callback, Coroutine };

inline const char* to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::Full: return "full";
    case Scheme::Callback: return "callback";
    case Scheme::Coroutine: return "coroutine";
  }
  return "?";
}

// Maximal run of compute steps, terminated by an I/O step (except the last).
struct Segment {
  std::vector<ComputeStep> computes;
  Nanos cost_ns = 0;
  std::optional<IoStep> io;
};

enum class SpawnKind : std::uint8_t { Successor, Done };

struct SpawnRule {
  SpawnKind kind = SpawnKind::Done;
  std::uint32_t next = 0;
  bool operator==(const SpawnRule&) const = default;
};

// Uninterruptible unit of scheduled work. If await_io is set the tasklet
// first polls that I/O and respawns itself on a miss; it then runs `segment`
// (its computes followed by the submission of the segment's I/O, if any) and
// finally spawns according to `spawn`.
struct Tasklet {
  std::uint32_t id = 0;
  TaskId owner = 0;
  std::optional<std::uint32_t> await_io;
  std::optional<std::uint32_t> segment;
  SpawnRule spawn;

  bool is_poll_only() const noexcept { return await_io.has_value() && !segment.has_value(); }
};

struct TaskletPlan {
  Scheme scheme = Scheme::Full;
  std::vector<Segment> segments;
  std::vector<Tasklet> tasklets;
  std::size_t io_count = 0;

  Nanos cost_of(const Tasklet& t) const noexcept { return t.segment ? segments[*t.segment].cost_ns : 0; }
  bool submits(const Tasklet& t) const noexcept { return t.segment && segments[*t.segment].io.has_value(); }
};

namespace detail {

inline void flatten(const TaskSpec& spec, std::vector<Segment>& out) {
  for (const auto& step : spec.steps) {
    if (const auto* c = std::get_if<ComputeStep>(&step)) {
      out.back().computes.push_back(*c);
      out.back().cost_ns += c->cost_ns;
    } else if (const auto* io = std::get_if<IoStep>(&step)) {
      out.back().io = *io;
      out.emplace_back();
    } else {
      const auto& call = std::get<CallStep>(step);
      if (!call.sub) throw std::invalid_argument("call step without a sub-task");
      flatten(*call.sub, out);
    }
  }
}

}  // namespace detail

inline std::vector<Segment> segment_spec(const TaskSpec& spec) {
  std::vector<Segment> segs(1);
  detail::flatten(spec, segs);
  return segs;
}

// Full partitioning: one tasklet per compute subtask, one poll tasklet per I/O.
// Each I/O's submission is appended to the tasklet of the preceding subtask.
// A trailing empty subtask after the last I/O produces no tasklet.
inline TaskletPlan partition_full(const TaskSpec& spec) {
  TaskletPlan plan;
  plan.scheme = Scheme::Full;
  plan.segments = segment_spec(spec);
  const std::size_t n_io = plan.segments.size() - 1;
  plan.io_count = n_io;
  const bool trailing = n_io == 0 || !plan.segments.back().computes.empty();
  const std::size_t n_compute = trailing ? n_io + 1 : n_io;

  // Layout: C0, P0, C1, P1, ..., [Cn]
  auto compute_index = [](std::size_t k) { return static_cast<std::uint32_t>(2 * k); };
  auto poll_index = [](std::size_t k) { return static_cast<std::uint32_t>(2 * k + 1); };
  for (std::size_t k = 0; k < n_compute; ++k) {
    Tasklet c;
    c.id = compute_index(k);
    c.owner = spec.task_id;
    c.segment = static_cast<std::uint32_t>(k);
    c.spawn = k < n_io ? SpawnRule{SpawnKind::Successor, poll_index(k)} : SpawnRule{};
    plan.tasklets.push_back(c);
    if (k < n_io) {
      Tasklet p;
      p.id = poll_index(k);
      p.owner = spec.task_id;
      p.await_io = static_cast<std::uint32_t>(k);
      p.spawn = k + 1 < n_compute ? SpawnRule{SpawnKind::Successor, compute_index(k + 1)} : SpawnRule{};
      plan.tasklets.push_back(p);
    }
  }
  return plan;
}

// Callback partitioning: the poll of each I/O is fused with the subtask that
// follows it, so that subtask runs on whichever thread observed the completion.
inline TaskletPlan partition_callback(const TaskSpec& spec) {
  TaskletPlan plan;
  plan.scheme = Scheme::Callback;
  plan.segments = segment_spec(spec);
  const std::size_t n_io = plan.segments.size() - 1;
  plan.io_count = n_io;
  const bool trailing = n_io == 0 || !plan.segments.back().computes.empty();

  Tasklet first;
  first.id = 0;
  first.owner = spec.task_id;
  first.segment = 0;
  first.spawn = n_io > 0 ? SpawnRule{SpawnKind::Successor, 1} : SpawnRule{};
  plan.tasklets.push_back(first);
  for (std::size_t k = 0; k < n_io; ++k) {
    Tasklet f;
    f.id = static_cast<std::uint32_t>(k + 1);
    f.owner = spec.task_id;
    f.await_io = static_cast<std::uint32_t>(k);
    if (k + 1 < n_io || trailing) f.segment = static_cast<std::uint32_t>(k + 1);
    f.spawn = k + 1 < n_io ? SpawnRule{SpawnKind::Successor, static_cast<std::uint32_t>(k + 2)} : SpawnRule{};
    plan.tasklets.push_back(f);
  }
  return plan;
}

// Coroutine tasks are scheduled with the callback shape (start, then one
// resume per I/O) but executed through a CoroutineFrame.
inline TaskletPlan make_plan(const TaskSpec& spec, Scheme scheme) {
  if (scheme == Scheme::Full) return partition_full(spec);
  TaskletPlan plan = partition_callback(spec);
  plan.scheme = scheme;
  return plan;
}

// I/O access for one running task; a task has at most one I/O outstanding.
class TaskIoPort {
 public:
  virtual ~TaskIoPort() = default;
  virtual std::optional<Completion> poll_io(std::uint32_t io_index) = 0;
  virtual void submit_io(std::uint32_t io_index, const IoRequest& req) = 0;
};

enum class TaskletOutcome : std::uint8_t { Respawn, Successor, Done };

struct TaskContext {
  std::uint64_t task_index = 0;
  IoGeometry geometry;
};

// Runs the completion-dependent part of a tasklet given an already observed
// completion (or none when the tasklet does not await). Used directly by
// reapers that execute continuations inline.
inline TaskletOutcome run_tasklet_after(const TaskletPlan& plan, const Tasklet& t, TaskState& state,
                                        const Completion* completion, TaskIoPort& port, const TaskContext& ctx) {
  if (t.await_io) {
    if (!completion) throw std::logic_error("awaiting tasklet run without its completion");
    apply_io_result(state, plan.segments[*t.await_io].io->op, *completion);
  }
  if (t.segment) {
    const Segment& seg = plan.segments[*t.segment];
    for (const auto& c : seg.computes) apply_compute(state, c);
    if (seg.io) port.submit_io(*t.segment, materialize(*seg.io, state, ctx.task_index, ctx.geometry));
  }
  return t.spawn.kind == SpawnKind::Successor ? TaskletOutcome::Successor : TaskletOutcome::Done;
}

inline TaskletOutcome run_tasklet(const TaskletPlan& plan, const Tasklet& t, TaskState& state, TaskIoPort& port,
                                  const TaskContext& ctx) {
  std::optional<Completion> c;
  if (t.await_io) {
    c = port.poll_io(*t.await_io);
    if (!c) return TaskletOutcome::Respawn;
  }
  return run_tasklet_after(plan, t, state, c ? &*c : nullptr, port, ctx);
}

// -- coroutine frames ----------------------------------------------------------

class ResumeAfterDone : public std::logic_error {
 public:
  ResumeAfterDone() : std::logic_error("coroutine resumed after completion") {}
};

class CompletionMismatch : public std::logic_error {
 public:
  CompletionMismatch() : std::logic_error("coroutine resumed with a completion it is not waiting for") {}
};

struct SuspendedOnIo {
  IoRequest request;  // user_data carries the frame's resume tag
};

struct FrameDone {
  TaskState final_state;
};

using ResumeResult = std::variant<SuspendedOnIo, FrameDone>;

enum class ResumePoint : std::uint8_t { Start, AwaitingIo, AwaitingCallee, Done };

// Stackless coroutine over a TaskSpec: a heap-allocated record of arguments,
// locals (the task state) and a resume point. A CallStep suspends into a
// nested callee frame that lives inside this one.
class CoroutineFrame {
 public:
  CoroutineFrame(std::shared_ptr<const TaskSpec> spec, TaskState args, std::uint64_t frame_id,
                 std::uint64_t task_index, IoGeometry geo)
      : spec_(std::move(spec)),
        args_(args),
        locals_(std::move(args)),
        frame_id_(frame_id),
        task_index_(task_index),
        geo_(geo),
        io_seq_(&own_io_seq_) {
    if (!spec_) throw std::invalid_argument("CoroutineFrame: null spec");
  }

  CoroutineFrame(const CoroutineFrame&) = delete;
  CoroutineFrame& operator=(const CoroutineFrame&) = delete;

  std::uint64_t frame_id() const noexcept { return frame_id_; }
  ResumePoint resume_point() const noexcept { return point_; }
  bool done() const noexcept { return point_ == ResumePoint::Done; }
  std::size_t pc() const noexcept { return pc_; }
  std::uint64_t resumes() const noexcept { return resumes_; }
  const TaskState& locals() const noexcept { return locals_; }

  // Size a frame for `spec` must reserve: header, arguments, locals, and the
  // largest callee frame it may hold while suspended.
  static std::size_t frame_size_of(const TaskSpec& spec, std::size_t state_bytes) {
    std::size_t callee = 0;
    for (const auto& step : spec.steps)
      if (const auto* call = std::get_if<CallStep>(&step)) callee = std::max(callee, frame_size_of(*call->sub, state_bytes));
    return sizeof(CoroutineFrame) + 2 * state_bytes + callee;
  }

  std::size_t frame_bytes() const { return frame_size_of(*spec_, locals_.size()); }

  ResumeResult resume(const Completion* completion = nullptr) {
    if (point_ == ResumePoint::Done) throw ResumeAfterDone();
    ++resumes_;
    if (point_ == ResumePoint::AwaitingIo) {
      if (!completion || completion->user_data != expected_tag_) throw CompletionMismatch();
      apply_io_result(locals_, std::get<IoStep>(spec_->steps[pc_]).op, *completion);
      ++pc_;
    } else if (point_ == ResumePoint::AwaitingCallee) {
      auto r = callee_->resume(completion);
      if (auto* s = std::get_if<SuspendedOnIo>(&r)) return *s;
      locals_ = std::move(std::get<FrameDone>(r).final_state);
      callee_.reset();
      ++pc_;
    } else if (completion) {
      throw CompletionMismatch();
    }
    return run();
  }

 private:
  ResumeResult run() {
    while (pc_ < spec_->steps.size()) {
      const Step& step = spec_->steps[pc_];
      if (const auto* c = std::get_if<ComputeStep>(&step)) {
        apply_compute(locals_, *c);
        ++pc_;
      } else if (const auto* io = std::get_if<IoStep>(&step)) {
        IoRequest req = materialize(*io, locals_, task_index_, geo_);
        expected_tag_ = (frame_id_ << 24) | ((*io_seq_)++ & 0xffffff);
        req.user_data = expected_tag_;
        point_ = ResumePoint::AwaitingIo;
        return SuspendedOnIo{req};
      } else {
        const auto& call = std::get<CallStep>(step);
        callee_ = std::make_unique<CoroutineFrame>(call.sub, locals_, frame_id_, task_index_, geo_);
        callee_->io_seq_ = io_seq_;
        auto r = callee_->resume(nullptr);
        if (auto* s = std::get_if<SuspendedOnIo>(&r)) {
          point_ = ResumePoint::AwaitingCallee;
          return *s;
        }
        locals_ = std::move(std::get<FrameDone>(r).final_state);
        callee_.reset();
        ++pc_;
      }
    }
    point_ = ResumePoint::Done;
    return FrameDone{locals_};
  }

  std::shared_ptr<const TaskSpec> spec_;
  TaskState args_;
  TaskState locals_;
  std::uint64_t frame_id_;
  std::uint64_t task_index_;
  IoGeometry geo_;
  std::size_t pc_ = 0;
  ResumePoint point_ = ResumePoint::Start;
  std::uint64_t expected_tag_ = 0;
  std::uint64_t resumes_ = 0;
  std::unique_ptr<CoroutineFrame> callee_;
  std::uint32_t own_io_seq_ = 0;
  std::uint32_t* io_seq_;
};

inline std::unique_ptr<CoroutineFrame> make_coroutine(std::shared_ptr<const TaskSpec> spec, std::uint64_t task_index,
                                                      IoGeometry geo, std::uint64_t frame_id) {
  TaskState s = initial_task_state(*spec, task_index);
  return std::make_unique<CoroutineFrame>(std::move(spec), std::move(s), frame_id, task_index, geo);
}

}  // namespace ringrt
