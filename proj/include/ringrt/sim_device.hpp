#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ring_core.hpp"
#include "types.hpp"
#include "virtual_clock.hpp"

namespace ringrt {

// Parameterized storage device: fixed per-op service time with optional
// uniform jitter, bounded internal parallelism, and per-entry CPU cost on the
// SQ-poll thread.
struct DeviceModel {
  Nanos service_time = 100 * kMicro;
  double jitter = 0.0;  // uniform in [-jitter, +jitter] * service_time
  std::uint32_t parallelism = 64;
  std::uint64_t capacity_bytes = std::uint64_t{1} << 30;
  std::uint32_t block_size = kDefaultBlockSize;
  Nanos submission_cpu_cost = 100;
  Nanos wakeup_cost = 5 * kMicro;
  double random_read_multiplier = 1.0;
  std::map<RequestId, std::int32_t> fault_plan;  // request id -> forced errno
  double fault_rate = 0.0;

  static DeviceModel desk_nvme() {
    DeviceModel m;
    m.jitter = 0.10;
    return m;
  }

  bool operator==(const DeviceModel&) const = default;
};

inline std::vector<std::string> model_violations(const DeviceModel& m) {
  std::vector<std::string> out;
  if (m.service_time <= 0) out.emplace_back("service_time must be positive");
  if (m.parallelism < 1) out.emplace_back("parallelism must be >= 1");
  if (m.jitter < 0.0 || m.jitter >= 1.0) out.emplace_back("jitter must be in [0, 1)");
  if (m.block_size == 0) out.emplace_back("block_size must be positive");
  if (m.capacity_bytes < m.block_size) out.emplace_back("capacity_bytes must hold at least one block");
  if (m.submission_cpu_cost < 0 || m.wakeup_cost < 0) out.emplace_back("costs must be non-negative");
  if (m.random_read_multiplier <= 0.0) out.emplace_back("random_read_multiplier must be positive");
  if (m.fault_rate < 0.0 || m.fault_rate > 1.0) out.emplace_back("fault_rate must be in [0, 1]");
  return out;
}

// Little's-law prediction the simulator converges to at zero jitter.
inline double steady_state_iops(const DeviceModel& m, std::size_t queue_depth) {
  if (queue_depth == 0) throw std::invalid_argument("queue_depth must be >= 1");
  const auto busy = std::min<std::size_t>(queue_depth, m.parallelism);
  return static_cast<double>(busy) * 1e9 / static_cast<double>(m.service_time);
}

enum class PollState : std::uint8_t { Asleep, Waking, Active };

// Kernel-side SQ polling thread. It spins while submissions keep arriving and
// falls asleep once it has seen none for idle_timeout; a sleeping thread needs
// wakeup_cost before it consumes again. CPU time accrues from the moment a wake
// starts until the moment it falls asleep.
class PollThreadModel {
 public:
  PollThreadModel(Nanos idle_timeout, Nanos wakeup_cost) : idle_timeout_(idle_timeout), wakeup_cost_(wakeup_cost) {}

  PollState tick(Nanos now, std::size_t submissions_seen) {
    advance(now);
    if (submissions_seen > 0) {
      switch (state_) {
        case PollState::Asleep:
          state_ = PollState::Waking;
          active_since_ = now;
          wake_ready_at_ = now + wakeup_cost_;
          ++wakeups_;
          advance(now);
          break;
        case PollState::Active:
          last_seen_ = now;
          break;
        case PollState::Waking:
          break;
      }
    }
    return state_;
  }

  PollState state() const noexcept { return state_; }
  Nanos last_submission_seen() const noexcept { return last_seen_; }
  Nanos wake_ready_at() const noexcept { return wake_ready_at_; }
  Nanos sleep_deadline() const noexcept { return last_seen_ + idle_timeout_; }
  Nanos idle_timeout() const noexcept { return idle_timeout_; }
  std::uint64_t wakeups() const noexcept { return wakeups_; }
  std::uint64_t sleeps() const noexcept { return sleeps_; }
  const std::vector<Nanos>& sleep_times() const noexcept { return sleep_times_; }

  Nanos busy_ns(Nanos now) const noexcept {
    return busy_ + (state_ == PollState::Asleep ? 0 : std::max<Nanos>(0, now - active_since_));
  }

 private:
  void advance(Nanos now) {
    if (state_ == PollState::Waking && now >= wake_ready_at_) {
      state_ = PollState::Active;
      last_seen_ = wake_ready_at_;
    }
    if (state_ == PollState::Active && now >= last_seen_ + idle_timeout_) {
      const Nanos slept_at = last_seen_ + idle_timeout_;
      busy_ += slept_at - active_since_;
      state_ = PollState::Asleep;
      ++sleeps_;
      sleep_times_.push_back(slept_at);
    }
  }

  Nanos idle_timeout_;
  Nanos wakeup_cost_;
  PollState state_ = PollState::Asleep;
  Nanos last_seen_ = 0;
  Nanos active_since_ = 0;
  Nanos wake_ready_at_ = 0;
  Nanos busy_ = 0;
  std::uint64_t wakeups_ = 0;
  std::uint64_t sleeps_ = 0;
  std::vector<Nanos> sleep_times_;
};

enum class TraceKind : std::uint8_t { Consume, Start, Complete, Error, Cancel, PollWake, PollSleep };

inline const char* to_string(TraceKind k) noexcept {
  switch (k) {
    case TraceKind::Consume: return "consume";
    case TraceKind::Start: return "start";
    case TraceKind::Complete: return "complete";
    case TraceKind::Error: return "error";
    case TraceKind::Cancel: return "cancel";
    case TraceKind::PollWake: return "poll_wake";
    case TraceKind::PollSleep: return "poll_sleep";
  }
  return "?";
}

struct TraceEvent {
  Nanos time;
  TraceKind kind;
  InstanceId instance;
  RequestId request_id;
  bool operator==(const TraceEvent&) const = default;
};

// Discrete-event device behind one or more ApiInstances.
//
// With a shared VirtualClock the device lives on the executor's calendar and
// SQ pushes ring its doorbell. Without one it owns a private clock and is
// driven either by step() (tests, standalone backend) or by run_until(wall
// time) from a dedicated engine thread; in both cases it is the only SQ
// consumer and the only CQ producer of every attached instance.
class SimDevice final : public EventTarget {
 public:
  SimDevice(DeviceModel model, std::uint64_t seed, VirtualClock* shared_clock = nullptr)
      : model_(std::move(model)),
        rng_(mix64(seed)),
        fault_rng_(mix64(seed ^ 0x5eed'fa17ULL)),
        clock_(shared_clock ? shared_clock : &own_clock_),
        shared_(shared_clock != nullptr) {
    auto v = model_violations(model_);
    if (!v.empty()) throw std::invalid_argument("DeviceModel: " + v.front());
  }

  SimDevice(const SimDevice&) = delete;
  SimDevice& operator=(const SimDevice&) = delete;

  const DeviceModel& model() const noexcept { return model_; }
  Nanos now() const noexcept { return clock_->now(); }
  VirtualClock& clock() noexcept { return *clock_; }

  InstanceId attach(ApiInstance& api) {
    const auto id = static_cast<InstanceId>(ports_.size());
    auto port = std::make_unique<Port>();
    port->api = &api;
    port->sq_poll = api.config().sq_poll;
    if (port->sq_poll) port->poll.emplace(api.config().sq_poll_idle_timeout, model_.wakeup_cost);
    port->doorbell.device = this;
    port->observed_tail = api.sq_tail();
    api.set_id(id);
    if (shared_) api.set_sq_doorbell(&port->doorbell);
    ports_.push_back(std::move(port));
    return id;
  }

  std::size_t instance_count() const noexcept { return ports_.size(); }

  // Consumes whatever is visible at the current time, then fires every event
  // at the next timestamp. Returns the number of events fired.
  std::size_t step() {
    scan(clock_->now());
    if (clock_->empty()) return 0;
    const Nanos t = clock_->next_time();
    std::size_t n = 0;
    while (!clock_->empty() && clock_->next_time() == t) {
      clock_->run_one();
      ++n;
    }
    return n;
  }

  // Wall-clock driver: fire everything due, then pick up new submissions.
  void run_until(Nanos t) {
    clock_->run_until(t);
    scan(clock_->now());
  }

  // Nothing in service, nothing queued inside the device, no SQ entries.
  bool idle() {
    if (reserved_ != 0) return false;
    for (auto& p : ports_)
      if (p->api->sq_peek()) return false;
    return true;
  }

  std::uint32_t in_service() const noexcept { return in_service_; }
  std::uint32_t max_in_service() const noexcept { return max_in_service_; }
  std::uint64_t consumed(InstanceId i) const { return ports_.at(i)->consumed; }
  std::uint64_t completed(InstanceId i) const { return ports_.at(i)->completed; }
  std::uint64_t completed_total() const noexcept { return completed_total_; }

  const PollThreadModel* poll_thread(InstanceId i) const {
    const auto& p = ports_.at(i);
    return p->poll ? &*p->poll : nullptr;
  }

  // Brings poll-thread state up to `now` (e.g. at the end of a run).
  void settle_poll_threads(Nanos now) {
    for (auto& p : ports_)
      if (p->poll && p->api->sq_peek() == nullptr) {
        if (p->poll->state() == PollState::Active && now >= p->poll->sleep_deadline()) {
          p->poll->tick(now, 0);
          if (tracing_) trace_.push_back({p->poll->sleep_times().back(), TraceKind::PollSleep, p->api->id(), 0});
        }
      }
  }

  Nanos poll_busy_ns(InstanceId i, Nanos now) const {
    const auto& p = ports_.at(i);
    return p->poll ? p->poll->busy_ns(now) : 0;
  }

  void set_fault(RequestId id, std::int32_t code) { model_.fault_plan[id] = code; }

  void enable_trace(bool on = true) { tracing_ = on; }
  const std::vector<TraceEvent>& trace() const noexcept { return trace_; }

  std::string trace_csv() const {
    std::ostringstream os;
    os << "time_ns,event_kind,instance_id,request_id\n";
    for (const auto& e : trace_) os << e.time << ',' << to_string(e.kind) << ',' << e.instance << ',' << e.request_id << '\n';
    return os.str();
  }

  void on_event(Nanos now, std::uint64_t tag) override {
    const auto kind = static_cast<EventKind>(tag >> 56);
    const auto payload = static_cast<std::uint32_t>(tag & ((std::uint64_t{1} << 56) - 1));
    switch (kind) {
      case EventKind::Scan:
        scan_scheduled_ = false;
        scan(now);
        break;
      case EventKind::Start:
        start(payload, now);
        break;
      case EventKind::Finish:
        finish(payload, now);
        break;
      case EventKind::Wake:
        on_wake(payload, now);
        break;
      case EventKind::Idle:
        on_idle(payload, now);
        break;
    }
  }

 private:
  enum class EventKind : std::uint8_t { Scan, Start, Finish, Wake, Idle };

  static std::uint64_t tag(EventKind k, std::uint32_t payload) {
    return (static_cast<std::uint64_t>(k) << 56) | payload;
  }

  struct Doorbell final : Notifier {
    SimDevice* device = nullptr;
    void notify() override { device->request_scan(); }
  };

  struct Port {
    ApiInstance* api = nullptr;
    bool sq_poll = false;
    std::optional<PollThreadModel> poll;
    std::uint64_t observed_tail = 0;
    Nanos poll_free_at = 0;
    bool wake_pending = false;
    bool idle_armed = false;
    std::uint64_t last_read_end = ~std::uint64_t{0};
    std::uint64_t consumed = 0;
    std::uint64_t completed = 0;
    Doorbell doorbell;
  };

  struct Op {
    InstanceId port = 0;
    IoRequest req;
    std::int32_t chain = -1;
  };

  void request_scan() {
    if (scan_scheduled_) return;
    scan_scheduled_ = true;
    clock_->schedule(clock_->now(), this, tag(EventKind::Scan, 0));
  }

  void scan(Nanos now) {
    const std::size_t n = ports_.size();
    if (n == 0) return;
    for (std::size_t j = 0; j < n; ++j) service_port(static_cast<InstanceId>((scan_cursor_ + j) % n), now);
    scan_cursor_ = (scan_cursor_ + 1) % n;
  }

  void service_port(InstanceId i, Nanos now) {
    Port& p = *ports_[i];
    ApiInstance& api = *p.api;
    if (p.sq_poll) {
      const std::uint64_t tail = api.sq_tail();
      std::size_t seen = static_cast<std::size_t>(tail - p.observed_tail);
      p.observed_tail = tail;
      if (seen == 0 && api.sq_peek() != nullptr) seen = 1;  // unconsumed work keeps the thread spinning
      const std::uint64_t sleeps_before = p.poll->sleeps();
      const PollState st = p.poll->tick(now, seen);
      if (p.poll->sleeps() != sleeps_before && tracing_) {
        trace_.push_back({p.poll->sleep_times().back(), TraceKind::PollSleep, i, 0});
      }
      if (st == PollState::Waking) {
        if (!p.wake_pending) {
          p.wake_pending = true;
          clock_->schedule(p.poll->wake_ready_at(), this, tag(EventKind::Wake, i));
        }
        return;
      }
      if (st == PollState::Asleep) return;
    }

    std::size_t taken = 0;
    while (reserved_ < model_.parallelism) {
      const IoRequest* head = api.sq_peek();
      if (!head) break;
      std::size_t chain_len = 1;
      if (head->link) {
        while (true) {
          const IoRequest* e = api.sq_peek(chain_len - 1);
          if (!e) throw std::logic_error("linked chain published partially");
          if (!e->link) break;
          ++chain_len;
        }
      }
      const std::uint32_t op_index = alloc_op();
      Op& op = ops_[op_index];
      op.port = i;
      op.req = *api.sq_consume();
      op.chain = -1;
      if (chain_len > 1) {
        const std::int32_t c = alloc_chain();
        for (std::size_t k = 1; k < chain_len; ++k) chains_[c].push_back(*api.sq_consume());
        op.chain = c;
      }
      ++reserved_;
      p.consumed += chain_len;
      taken += chain_len;
      if (tracing_) trace_.push_back({now, TraceKind::Consume, i, op.req.request_id});

      Nanos ready_at = now;
      if (p.sq_poll) {
        p.poll_free_at = std::max(now, p.poll_free_at) + model_.submission_cpu_cost * static_cast<Nanos>(chain_len);
        ready_at = p.poll_free_at;
      }
      if (ready_at > now) {
        clock_->schedule(ready_at, this, tag(EventKind::Start, op_index));
      } else {
        start(op_index, now);
      }
    }
    if (p.sq_poll) {
      if (taken > 0) p.poll->tick(now, taken);
      arm_idle(i);
    }
  }

  void arm_idle(InstanceId i) {
    Port& p = *ports_[i];
    if (p.idle_armed || p.poll->state() != PollState::Active) return;
    p.idle_armed = true;
    clock_->schedule(p.poll->sleep_deadline(), this, tag(EventKind::Idle, i));
  }

  void on_wake(InstanceId i, Nanos now) {
    Port& p = *ports_[i];
    p.wake_pending = false;
    p.poll->tick(now, 0);
    if (tracing_) trace_.push_back({now, TraceKind::PollWake, i, 0});
    service_port(i, now);
  }

  void on_idle(InstanceId i, Nanos now) {
    Port& p = *ports_[i];
    p.idle_armed = false;
    if (p.poll->state() != PollState::Active) return;
    if (p.api->sq_peek() != nullptr || p.api->sq_tail() != p.observed_tail) {
      service_port(i, now);
      return;
    }
    p.poll->tick(now, 0);
    if (p.poll->state() == PollState::Asleep) {
      if (tracing_) trace_.push_back({p.poll->sleep_times().back(), TraceKind::PollSleep, i, 0});
    } else {
      arm_idle(i);
    }
  }

  Nanos service_time_for(Port& p, const IoRequest& req) {
    double base = static_cast<double>(model_.service_time);
    if (req.op == OpKind::Read) {
      if (model_.random_read_multiplier != 1.0 && req.offset != p.last_read_end) base *= model_.random_read_multiplier;
      p.last_read_end = req.offset + req.length;
    }
    auto t = static_cast<Nanos>(base);
    const auto spread = static_cast<std::uint64_t>(base * model_.jitter);
    if (spread > 0) t = t + static_cast<Nanos>(rng_.below(2 * spread + 1)) - static_cast<Nanos>(spread);
    return std::max<Nanos>(1, t);
  }

  void start(std::uint32_t op_index, Nanos now) {
    Op& op = ops_[op_index];
    Port& p = *ports_[op.port];
    ++in_service_;
    max_in_service_ = std::max(max_in_service_, in_service_);
    if (tracing_) trace_.push_back({now, TraceKind::Start, op.port, op.req.request_id});
    clock_->schedule(now + service_time_for(p, op.req), this, tag(EventKind::Finish, op_index));
  }

  void finish(std::uint32_t op_index, Nanos now) {
    Op& op = ops_[op_index];
    Port& p = *ports_[op.port];
    --in_service_;

    Completion c{op.req.request_id, op.req.user_data, CompletionStatus::Ok, 0, op.req.length, op.req.submit_time, now};
    if (auto it = model_.fault_plan.find(op.req.request_id); it != model_.fault_plan.end()) {
      c.status = CompletionStatus::Error;
      c.error_code = it->second;
      c.bytes = 0;
    } else if (model_.fault_rate > 0.0 && fault_rng_.unit() < model_.fault_rate) {
      c.status = CompletionStatus::Error;
      c.error_code = 5;  // EIO
      c.bytes = 0;
    }
    post(p, op.port, c, c.ok() ? TraceKind::Complete : TraceKind::Error);

    if (op.chain >= 0) {
      auto& rest = chains_[op.chain];
      if (c.ok() && !rest.empty()) {
        op.req = rest.front();
        rest.pop_front();
        start(op_index, now);
        return;
      }
      for (const auto& r : rest) {
        post(p, op.port, Completion{r.request_id, r.user_data, CompletionStatus::Canceled, 125, 0, r.submit_time, now},
             TraceKind::Cancel);
      }
      rest.clear();
      free_chains_.push_back(op.chain);
    }
    free_ops_.push_back(op_index);
    --reserved_;
    scan(now);
  }

  void post(Port& p, InstanceId i, const Completion& c, TraceKind kind) {
    if (tracing_) trace_.push_back({c.complete_time, kind, i, c.request_id});
    ++p.completed;
    ++completed_total_;
    p.api->cq_post(c);
  }

  std::uint32_t alloc_op() {
    if (!free_ops_.empty()) {
      const auto i = free_ops_.back();
      free_ops_.pop_back();
      return i;
    }
    ops_.emplace_back();
    return static_cast<std::uint32_t>(ops_.size() - 1);
  }

  std::int32_t alloc_chain() {
    if (!free_chains_.empty()) {
      const auto i = free_chains_.back();
      free_chains_.pop_back();
      return i;
    }
    chains_.emplace_back();
    return static_cast<std::int32_t>(chains_.size() - 1);
  }

  DeviceModel model_;
  SplitMix rng_;
  SplitMix fault_rng_;
  VirtualClock own_clock_;
  VirtualClock* clock_;
  bool shared_;
  bool scan_scheduled_ = false;
  std::size_t scan_cursor_ = 0;
  std::vector<std::unique_ptr<Port>> ports_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> free_ops_;
  std::vector<std::deque<IoRequest>> chains_;
  std::vector<std::int32_t> free_chains_;
  std::uint32_t reserved_ = 0;
  std::uint32_t in_service_ = 0;
  std::uint32_t max_in_service_ = 0;
  std::uint64_t completed_total_ = 0;
  bool tracing_ = false;
  std::vector<TraceEvent> trace_;
};

// Backend view of one ApiInstance bound to a private SimDevice.
class SimBackend final : public Backend {
 public:
  SimBackend(DeviceModel model, ApiConfig api_cfg, std::uint64_t seed)
      : api_(with_geometry(api_cfg, model)), device_(std::move(model), seed) {
    device_.attach(api_);
  }

  PushResult push_submission(const IoRequest& req) override { return api_.sq_push(req, device_.now()); }
  PushResult push_linked(std::span<const IoRequest> reqs) override { return api_.submit_linked(reqs, device_.now()); }
  std::vector<Completion> reap_completions(std::size_t max) override { return api_.cq_reap(max); }
  bool progress() override { return device_.step() > 0; }
  Depth depth() const override { return api_.depth(); }
  std::uint64_t capacity_bytes() const override { return api_.config().capacity_bytes; }
  std::uint32_t block_size() const override { return api_.config().block_size; }

  ApiInstance& api() noexcept { return api_; }
  SimDevice& device() noexcept { return device_; }

 private:
  static ApiConfig with_geometry(ApiConfig cfg, const DeviceModel& m) {
    cfg.capacity_bytes = m.capacity_bytes;
    cfg.block_size = m.block_size;
    return cfg;
  }

  ApiInstance api_;
  SimDevice device_;
};

}  // namespace ringrt
