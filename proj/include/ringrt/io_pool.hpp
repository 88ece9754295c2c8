#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "executor.hpp"
#include "handle.hpp"
#include "metrics.hpp"
#include "mpsc_queue.hpp"
#include "platform.hpp"
#include "ring_core.hpp"

namespace ringrt {

enum class InstanceThreading : std::uint8_t { SingleThread, SubmitReapPair };
enum class DispatchPolicy : std::uint8_t { RoundRobin, LeastLoaded };
enum class InstanceState : std::uint8_t { Running, Draining, Asleep };

inline const char* to_string(InstanceThreading t) noexcept {
  return t == InstanceThreading::SingleThread ? "single_thread" : "submit_reap_pair";
}
inline const char* to_string(DispatchPolicy p) noexcept {
  return p == DispatchPolicy::RoundRobin ? "round_robin" : "least_loaded";
}
inline const char* to_string(InstanceState s) noexcept {
  switch (s) {
    case InstanceState::Running: return "running";
    case InstanceState::Draining: return "draining";
    case InstanceState::Asleep: return "asleep";
  }
  return "?";
}

struct ScalingConfig {
  bool enabled = false;
  Nanos window = 10 * kMilli;
  double target_inflight_per_instance = 0.0;  // 0 selects 75% of the SQ capacity
  std::uint32_t min_active = 1;
  std::uint32_t samples_per_window = 10;

  bool operator==(const ScalingConfig&) const = default;
};

struct PoolConfig {
  std::uint32_t instances = 1;
  InstanceThreading threading = InstanceThreading::SingleThread;
  DispatchPolicy policy = DispatchPolicy::RoundRobin;
  std::size_t inbox_capacity = 1024;
  std::size_t batch = 32;  // max SQ or CQ entries moved per instance step
  ApiConfig api;
  ScalingConfig scaling;
  CostModel costs;
  bool cooperative = false;  // no instance threads; callers drive pool_tick()
};

class TimeoutExceeded : public std::runtime_error {
 public:
  explicit TimeoutExceeded(std::uint64_t abandoned)
      : std::runtime_error("drain deadline exceeded with " + std::to_string(abandoned) + " requests abandoned"),
        abandoned_(abandoned) {}
  std::uint64_t abandoned() const noexcept { return abandoned_; }

 private:
  std::uint64_t abandoned_;
};

// Picks how many instances receive new requests. Once per window it compares
// the mean outstanding load against the per-instance setpoint and moves the
// active count one step toward ceil(load / setpoint).
class ScalingController {
 public:
  ScalingController(ScalingConfig cfg, std::uint32_t max_active, std::size_t sq_entries)
      : cfg_(cfg), max_(max_active), active_(max_active) {
    if (max_active == 0) throw std::invalid_argument("ScalingController: no instances");
    if (cfg_.min_active < 1 || cfg_.min_active > max_active) {
      throw std::invalid_argument("ScalingController: min_active out of range");
    }
    if (cfg_.window <= 0 || cfg_.samples_per_window == 0) throw std::invalid_argument("ScalingController: bad window");
    target_ = cfg_.target_inflight_per_instance > 0.0 ? cfg_.target_inflight_per_instance
                                                      : 0.75 * static_cast<double>(sq_entries);
    timeline_.emplace_back(0, active_);
  }

  const ScalingConfig& config() const noexcept { return cfg_; }
  double target() const noexcept { return target_; }
  std::uint32_t active() const noexcept { return active_; }
  std::uint32_t max_active() const noexcept { return max_; }
  Nanos sample_period() const noexcept { return std::max<Nanos>(1, cfg_.window / cfg_.samples_per_window); }
  const std::vector<std::pair<Nanos, std::uint32_t>>& timeline() const noexcept { return timeline_; }

  // Returns true when this sample closed a window.
  bool sample(Nanos now, double outstanding) {
    sum_ += outstanding;
    ++samples_;
    if (samples_ < cfg_.samples_per_window) return false;
    decide(now, sum_ / samples_);
    sum_ = 0.0;
    samples_ = 0;
    return true;
  }

  std::uint32_t desired_for(double load) const {
    const auto want = static_cast<std::uint32_t>(std::max(0.0, std::ceil(load / target_)));
    return std::clamp(want, cfg_.min_active, max_);
  }

 private:
  void decide(Nanos now, double mean_load) {
    const std::uint32_t want = desired_for(mean_load);
    std::uint32_t next = active_;
    if (want > active_) ++next;
    if (want < active_) --next;
    if (next != active_) {
      active_ = next;
      timeline_.emplace_back(now, active_);
    }
  }

  ScalingConfig cfg_;
  std::uint32_t max_;
  std::uint32_t active_;
  double target_ = 1.0;
  double sum_ = 0.0;
  std::uint32_t samples_ = 0;
  std::vector<std::pair<Nanos, std::uint32_t>> timeline_;
};

// Records which actor touched a ring side first and counts any other actor
// that touches it afterwards.
class SideOwner {
 public:
  void touch(ActorId who, std::uint64_t& violations) {
    ActorId expected = kNoActor;
    if (owner_.compare_exchange_strong(expected, who, std::memory_order_relaxed)) return;
    if (expected != who) ++violations;
  }

 private:
  std::atomic<ActorId> owner_{kNoActor};
};

// Exactly-once ledger over one ApiInstance: per request id, how many
// completions were reaped. Written only by the reaping side.
class DeliveryLedger {
 public:
  void record(RequestId id) {
    if (id >= counts_.size()) counts_.resize(std::max<std::size_t>(id + 1, counts_.size() * 2), 0);
    if (counts_[id] < 255) ++counts_[id];
  }
  // True iff ids [0, accepted) were each delivered exactly once and nothing else.
  bool exactly_once(std::uint64_t accepted) const {
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const std::uint8_t want = i < accepted ? 1 : 0;
      if (counts_[i] != want) return false;
    }
    return counts_.size() >= accepted;
  }

 private:
  std::vector<std::uint8_t> counts_;
};

using HandlePtr = std::shared_ptr<HandleState>;

// Static or dynamic I/O thread pool: a dispatch layer in front of k I/O
// instances, each exclusively owning one ApiInstance.
class IoPool {
 public:
  IoPool(PoolConfig cfg, SimPlatform& platform, std::string run_id = {})
      : cfg_(std::move(cfg)), platform_(platform), run_id_(std::move(run_id)) {
    if (cfg_.instances == 0) throw std::invalid_argument("IoPool: at least one instance required");
    if (cfg_.batch == 0) throw std::invalid_argument("IoPool: batch must be >= 1");
    active_.store(cfg_.instances, std::memory_order_relaxed);
    for (std::uint32_t i = 0; i < cfg_.instances; ++i) units_.push_back(std::make_unique<Unit>(*this, i));
    if (!cfg_.cooperative) {
      for (auto& u : units_) u->register_actors();
    }
    if (cfg_.scaling.enabled) {
      controller_.emplace(cfg_.scaling, cfg_.instances, cfg_.api.sq_entries);
      timer_ = std::make_unique<ControllerTimer>(*this);
      if (auto* v = platform_.virtual_executor()) {
        v->clock().schedule(platform_.now() + controller_->sample_period(), timer_.get());
      } else {
        platform_.add_actor(timer_.get());
      }
    }
  }

  IoPool(const IoPool&) = delete;
  IoPool& operator=(const IoPool&) = delete;

  const PoolConfig& config() const noexcept { return cfg_; }
  std::uint32_t instance_count() const noexcept { return cfg_.instances; }
  std::uint32_t active_count() const noexcept { return active_.load(std::memory_order_acquire); }
  ApiInstance& api(InstanceId i) { return *units_.at(i)->api; }
  const ScalingController* controller() const noexcept { return controller_ ? &*controller_ : nullptr; }
  ActorId submit_actor(InstanceId i) const { return units_.at(i)->submit_actor; }
  ActorId reap_actor(InstanceId i) const { return units_.at(i)->reap_actor; }

  std::uint64_t dispatched() const noexcept { return dispatched_.load(std::memory_order_acquire); }
  std::uint64_t completed() const noexcept { return completed_.load(std::memory_order_acquire); }
  std::uint64_t outstanding() const noexcept { return dispatched() - completed(); }
  std::size_t overflow_size() const noexcept { return overflow_size_.load(std::memory_order_acquire); }
  std::uint64_t inactive_deliveries() const noexcept { return inactive_deliveries_.load(std::memory_order_relaxed); }

  InstanceState instance_state(InstanceId i) const {
    const Unit& u = *units_.at(i);
    if (i < active_count()) return InstanceState::Running;
    return u.outstanding() > 0 ? InstanceState::Draining : InstanceState::Asleep;
  }

  // Any thread. Returns immediately with a pollable handle.
  RequestHandle pool_submit(IoRequest req) {
    auto h = std::make_shared<HandleState>();
    h->reset(next_handle_id_.fetch_add(1, std::memory_order_relaxed), req);
    dispatch(h);
    return RequestHandle(std::move(h));
  }

  // Routes an already prepared handle. The handle's request must satisfy the
  // request invariants; it is validated here so a bad request never reaches
  // an instance thread.
  void dispatch(HandlePtr h) {
    if (shutting_down_.load(std::memory_order_acquire)) throw PoolShutdown();
    validate_request(h->request, platform_.device().model().capacity_bytes, platform_.device().model().block_size);
    dispatched_.fetch_add(1, std::memory_order_acq_rel);
    cross_thread_msgs_.fetch_add(1, std::memory_order_relaxed);
    if (overflow_size_.load(std::memory_order_acquire) > 0) {
      park(std::move(h));
      return;
    }
    const std::uint32_t active = active_count();
    const std::uint32_t idx = choose(active);
    if (idx >= active) inactive_deliveries_.fetch_add(1, std::memory_order_relaxed);
    Unit& u = *units_[idx];
    h->instance = idx;
    std::uint64_t races = 0;
    if (!u.inbox.try_push(h, &races)) {
      dispatch_contention_.fetch_add(races, std::memory_order_relaxed);
      park(std::move(h));
      return;
    }
    if (races) dispatch_contention_.fetch_add(races, std::memory_order_relaxed);
    u.note_inbox(u.inbox.size());
    if (u.submit_actor != kNoActor) platform_.exec().wake(u.submit_actor);
  }

  // Cooperative mode: one submit/reap cycle of instance `i` on the caller's
  // thread. Returns true if anything moved.
  bool pool_tick(InstanceId i) {
    Unit& u = *units_.at(i);
    const Nanos now = platform_.now();
    bool moved = false;
    if (u.reap.prepare(now)) {
      u.reap.apply(now);
      moved = true;
    }
    if (u.submit.prepare(now)) {
      u.submit.apply(now);
      moved = true;
    }
    return moved;
  }

  // Refuses new submissions, waits for every dispatched request to complete
  // (up to `deadline` from now), stops the platform's threads and reports.
  MetricsReport drain_and_shutdown(Nanos deadline) {
    shutting_down_.store(true, std::memory_order_release);
    const Nanos start = platform_.now();
    const bool drained = outstanding() == 0 ||
                         (deadline > 0 && platform_.run_until([&] { return outstanding() == 0; }, start + deadline));
    platform_.stop();
    if (!drained) throw TimeoutExceeded(outstanding());
    return report(platform_.now());
  }

  bool shutting_down() const noexcept { return shutting_down_.load(std::memory_order_acquire); }

  // Quiescent only: pool-side counters and per-instance metrics.
  void collect(MetricsReport& r, Nanos end) {
    const Nanos elapsed = std::max<Nanos>(1, end - r.window_start);
    for (auto& u : units_) {
      r.submitted += u->submit.stats.submitted;
      MetricsReport part = u->reap.stats;
      part.run_id = r.run_id;
      const MetricsReport both[] = {r, part};
      r = merge(both);
      r.sq_producer_violations += u->submit.stats.sq_producer_violations;
      InstanceMetrics m;
      m.id = u->index;
      const Nanos busy = u->submit.busy + (u->split ? u->reap.busy : 0);
      m.utilization = std::min(1.0, static_cast<double>(busy) / static_cast<double>(elapsed));
      m.io_busy_ns = u->submit.io_busy + u->reap.io_busy;
      m.poll_busy_ns = platform_.device().poll_busy_ns(u->api->id(), end);
      m.inbox_peak = u->inbox_peak.load(std::memory_order_relaxed);
      m.requests = u->submit.stats.submitted;
      r.per_instance.push_back(m);
    }
    r.cross_thread_msgs += cross_thread_msgs_.load(std::memory_order_relaxed);
    r.contention_events += dispatch_contention_.load(std::memory_order_relaxed);
    r.inactive_deliveries += inactive_deliveries_.load(std::memory_order_relaxed);
    if (controller_) {
      r.active_instance_timeline = controller_->timeline();
    } else {
      r.active_instance_timeline = {{0, cfg_.instances}};
    }
  }

  MetricsReport report(Nanos end) {
    platform_.device().settle_poll_threads(end);
    MetricsReport r;
    r.run_id = run_id_;
    r.window_end = end;
    collect(r, end);
    return r;
  }

  bool exactly_once() const {
    for (const auto& u : units_)
      if (!u->ledger.exactly_once(u->api->accepted())) return false;
    return true;
  }

  std::uint64_t double_completions() const noexcept { return double_completions_.load(std::memory_order_relaxed); }

 private:
  struct Unit;

  // Inbox (or overflow) -> SQ.
  struct SubmitSide {
    explicit SubmitSide(Unit& u) : unit(u) {}

    std::size_t prepare(Nanos now) {
      begin_at = now;
      batch.clear();
      const std::size_t room = std::min(unit.api->push_room(), unit.pool.cfg_.batch);
      while (batch.size() < room) {
        auto h = unit.inbox.try_pop();
        if (!h) break;
        batch.push_back(std::move(*h));
      }
      if (batch.size() < room && unit.index < unit.pool.active_count()) {
        unit.pool.pull_overflow(unit.index, room - batch.size(), batch);
      }
      return batch.size();
    }

    void apply(Nanos now) {
      for (auto& h : batch) {
        IoRequest req = h->request;
        const auto slot = unit.slots.acquire(h);
        if (!slot) throw std::logic_error("IoPool: slot table exhausted");
        req.user_data = *slot;
        if (!unit.api->sq_push(req, now).accepted()) throw std::logic_error("IoPool: SQ refused a prepared push");
        h->mark_submitted();
        ++stats.submitted;
        unit.sq_owner.touch(self, stats.sq_producer_violations);
      }
      const Nanos cost = static_cast<Nanos>(batch.size()) * unit.pool.cfg_.costs.submit;
      io_busy += unit.pool.platform_.exec().virtual_time() ? cost : now - begin_at;
      busy += now - begin_at;
      batch.clear();
    }

    Unit& unit;
    ActorId self = kNoActor;
    std::vector<HandlePtr> batch;
    MetricsReport stats;
    Nanos begin_at = 0;
    Nanos busy = 0;
    Nanos io_busy = 0;
  };

  // CQ -> handles, running inline continuations.
  struct ReapSide {
    explicit ReapSide(Unit& u) : unit(u) {}

    std::size_t prepare(Nanos now) {
      begin_at = now;
      reaped.resize(unit.pool.cfg_.batch);
      const std::size_t n = unit.api->cq_reap(std::span<Completion>(reaped.data(), reaped.size()));
      reaped.resize(n);
      inline_cost = 0;
      for (const auto& c : reaped) {
        const HandleState& h = *unit.slots.at(static_cast<std::uint32_t>(c.user_data));
        if (h.continuation) inline_cost += h.continuation->inline_cost(h);
      }
      return n;
    }

    Nanos cost() const noexcept { return static_cast<Nanos>(reaped.size()) * unit.pool.cfg_.costs.reap + inline_cost; }

    void apply(Nanos now) {
      for (auto c : reaped) {
        HandlePtr h = unit.slots.release(static_cast<std::uint32_t>(c.user_data));
        unit.ledger.record(c.request_id);
        unit.cq_owner.touch(self, stats.cq_consumer_violations);
        c.user_data = h->request.user_data;
        stats.record_completion(c.submit_time, c.complete_time, c.ok(), c.status == CompletionStatus::Canceled);
        Continuation* k = h->continuation;
        if (h->waiter != kNoActor && h->waiter != self) ++stats.cross_thread_msgs;
        if (!h->complete(c, self)) {
          unit.pool.double_completions_.fetch_add(1, std::memory_order_relaxed);
          continue;
        }
        unit.pool.completed_.fetch_add(1, std::memory_order_acq_rel);
        if (k) k->run_inline(*h, self, now);
      }
      const Nanos cost = static_cast<Nanos>(reaped.size()) * unit.pool.cfg_.costs.reap;
      io_busy += unit.pool.platform_.exec().virtual_time() ? cost : now - begin_at;
      busy += now - begin_at;
      reaped.clear();
    }

    Unit& unit;
    ActorId self = kNoActor;
    std::vector<Completion> reaped;
    Nanos inline_cost = 0;
    MetricsReport stats;
    Nanos begin_at = 0;
    Nanos busy = 0;
    Nanos io_busy = 0;
  };

  struct SingleActor final : Actor {
    explicit SingleActor(Unit& u) : unit(u) {}
    std::optional<Nanos> begin(Nanos now) override {
      const std::size_t r = unit.reap.prepare(now);
      const std::size_t s = unit.submit.prepare(now);
      if (r == 0 && s == 0) return std::nullopt;
      return unit.reap.cost() + static_cast<Nanos>(s) * unit.pool.cfg_.costs.submit;
    }
    void end(Nanos now) override {
      unit.reap.apply(now);
      unit.submit.apply(now);
    }
    Unit& unit;
  };

  struct SubmitActor final : Actor {
    explicit SubmitActor(Unit& u) : unit(u) {}
    std::optional<Nanos> begin(Nanos now) override {
      const std::size_t s = unit.submit.prepare(now);
      if (s == 0) return std::nullopt;
      return static_cast<Nanos>(s) * unit.pool.cfg_.costs.submit;
    }
    void end(Nanos now) override { unit.submit.apply(now); }
    Unit& unit;
  };

  struct ReapActor final : Actor {
    explicit ReapActor(Unit& u) : unit(u) {}
    std::optional<Nanos> begin(Nanos now) override {
      if (unit.reap.prepare(now) == 0) return std::nullopt;
      return unit.reap.cost();
    }
    void end(Nanos now) override {
      unit.reap.apply(now);
      // Freed CQ space may unblock a submitter that went idle on a full ring.
      if (unit.inbox.size() > 0 || unit.pool.overflow_size() > 0) unit.pool.platform_.exec().wake(unit.submit_actor);
    }
    Unit& unit;
  };

  struct Unit {
    Unit(IoPool& p, InstanceId i)
        : pool(p),
          index(i),
          api(&p.platform_.add_instance(p.cfg_.api)),
          inbox(p.cfg_.inbox_capacity),
          slots(p.cfg_.api.cq_entries),
          submit(*this),
          reap(*this),
          split(p.cfg_.threading == InstanceThreading::SubmitReapPair) {}

    void register_actors() {
      if (split) {
        submit_actor_impl = std::make_unique<SubmitActor>(*this);
        reap_actor_impl = std::make_unique<ReapActor>(*this);
        submit_actor = pool.platform_.add_actor(submit_actor_impl.get());
        reap_actor = pool.platform_.add_actor(reap_actor_impl.get());
      } else {
        single_impl = std::make_unique<SingleActor>(*this);
        submit_actor = reap_actor = pool.platform_.add_actor(single_impl.get());
      }
      submit.self = submit_actor;
      reap.self = reap_actor;
      pool.platform_.on_completion(*api, {reap_actor});
    }

    std::uint64_t outstanding() const { return inbox.size() + (api->accepted() - api->reaped()); }

    void note_inbox(std::size_t depth) {
      std::uint64_t cur = inbox_peak.load(std::memory_order_relaxed);
      while (depth > cur && !inbox_peak.compare_exchange_weak(cur, depth, std::memory_order_relaxed)) {
      }
    }

    IoPool& pool;
    InstanceId index;
    ApiInstance* api;
    BoundedMpscQueue<HandlePtr> inbox;
    SlotTable<HandlePtr> slots;
    SubmitSide submit;
    ReapSide reap;
    bool split;
    DeliveryLedger ledger;
    SideOwner sq_owner;
    SideOwner cq_owner;
    std::atomic<std::uint64_t> inbox_peak{0};
    ActorId submit_actor = kNoActor;
    ActorId reap_actor = kNoActor;
    std::unique_ptr<SingleActor> single_impl;
    std::unique_ptr<SubmitActor> submit_actor_impl;
    std::unique_ptr<ReapActor> reap_actor_impl;
  };

  struct ControllerTimer final : EventTarget, Actor {
    explicit ControllerTimer(IoPool& p) : pool(p) {}
    void on_event(Nanos now, std::uint64_t) override {
      pool.controller_sample(now);
      pool.platform_.virtual_executor()->clock().schedule(now + pool.controller_->sample_period(), this);
    }
    std::optional<Nanos> begin(Nanos now) override {
      if (next == 0) next = now + pool.controller_->sample_period();
      if (now < next) return std::nullopt;
      pool.controller_sample(now);
      next += pool.controller_->sample_period();
      return 0;
    }
    void end(Nanos) override {}
    IoPool& pool;
    Nanos next = 0;
  };

  std::uint32_t choose(std::uint32_t active) {
    if (cfg_.policy == DispatchPolicy::RoundRobin) {
      return static_cast<std::uint32_t>(rr_.fetch_add(1, std::memory_order_relaxed) % active);
    }
    std::uint32_t best = 0;
    std::size_t best_depth = units_[0]->inbox.size();
    for (std::uint32_t i = 1; i < active; ++i) {
      const std::size_t d = units_[i]->inbox.size();
      if (d < best_depth) {
        best = i;
        best_depth = d;
      }
    }
    return best;
  }

  void park(HandlePtr h) {
    {
      std::lock_guard lock(overflow_mu_);
      overflow_.push_back(std::move(h));
      overflow_size_.store(overflow_.size(), std::memory_order_release);
    }
    const std::uint32_t active = active_count();
    for (std::uint32_t i = 0; i < active; ++i)
      if (units_[i]->submit_actor != kNoActor) platform_.exec().wake(units_[i]->submit_actor);
  }

  void pull_overflow(InstanceId idx, std::size_t n, std::vector<HandlePtr>& out) {
    if (n == 0 || overflow_size_.load(std::memory_order_acquire) == 0) return;
    std::lock_guard lock(overflow_mu_);
    if (idx >= active_count()) {
      inactive_deliveries_.fetch_add(1, std::memory_order_relaxed);
      return;
    }
    while (n-- > 0 && !overflow_.empty()) {
      overflow_.front()->instance = idx;
      out.push_back(std::move(overflow_.front()));
      overflow_.pop_front();
    }
    overflow_size_.store(overflow_.size(), std::memory_order_release);
  }

  void controller_sample(Nanos now) {
    const std::uint32_t active = active_count();
    double load = static_cast<double>(overflow_size());
    for (std::uint32_t i = 0; i < active; ++i) load += static_cast<double>(units_[i]->outstanding());
    if (controller_->sample(now, load)) {
      const std::uint32_t next = controller_->active();
      if (next != active) {
        active_.store(next, std::memory_order_release);
        // Newly activated instances may pick up parked requests right away.
        for (std::uint32_t i = 0; i < next; ++i)
          if (units_[i]->submit_actor != kNoActor) platform_.exec().wake(units_[i]->submit_actor);
      }
    }
  }

  PoolConfig cfg_;
  SimPlatform& platform_;
  std::string run_id_;
  std::vector<std::unique_ptr<Unit>> units_;
  std::atomic<std::uint32_t> active_{1};
  std::atomic<std::uint64_t> rr_{0};
  std::atomic<std::uint64_t> next_handle_id_{0};
  std::atomic<std::uint64_t> dispatched_{0};
  std::atomic<std::uint64_t> completed_{0};
  std::atomic<std::uint64_t> cross_thread_msgs_{0};
  std::atomic<std::uint64_t> dispatch_contention_{0};
  std::atomic<std::uint64_t> inactive_deliveries_{0};
  std::atomic<std::uint64_t> double_completions_{0};
  std::atomic<bool> shutting_down_{false};
  std::mutex overflow_mu_;
  std::deque<HandlePtr> overflow_;
  std::atomic<std::size_t> overflow_size_{0};
  std::optional<ScalingController> controller_;
  std::unique_ptr<ControllerTimer> timer_;
};

}  // namespace ringrt
