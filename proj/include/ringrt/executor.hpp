#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "types.hpp"
#include "virtual_clock.hpp"

namespace ringrt {

using ActorId = std::uint32_t;
inline constexpr ActorId kNoActor = ~ActorId{0};

// A simulated or real thread. begin() picks the next piece of work and returns
// what it costs (nullopt when there is nothing to do); end() applies its
// effects once that time has passed. Both are always called from the same
// thread, so a unit of work started by begin() finishes on that thread.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual std::optional<Nanos> begin(Nanos now) = 0;
  virtual void end(Nanos now) = 0;
};

// CPU charges, in nanoseconds, used by the virtual-time executor. Wall-clock
// runs pay the real cost of the code instead (compute steps optionally spin).
struct CostModel {
  Nanos tasklet_overhead = 20;
  Nanos submit = 100;    // one SQ entry
  Nanos reap = 100;      // one CQ entry
  Nanos dispatch = 50;   // push into an instance inbox
  Nanos handle_poll = 20;
  Nanos lock = 100;      // uncontended acquire + release
  Nanos resume_base = 30;
  Nanos frame_byte_cost_per_64 = 1;

  bool operator==(const CostModel&) const = default;
};

class Executor {
 public:
  virtual ~Executor() = default;
  virtual Nanos now() const = 0;
  // Makes an idle actor runnable. No-op for actors that are busy or for
  // executors whose actors poll.
  virtual void wake(ActorId id) = 0;
  virtual bool virtual_time() const noexcept = 0;
  // Burns `ns` of real CPU when running on wall-clock threads with spinning
  // enabled; does nothing in virtual time (begin() already charged it).
  virtual void burn(Nanos ns) = 0;
};

inline void spin_for(Nanos ns) {
  if (ns <= 0) return;
  const auto until = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  while (std::chrono::steady_clock::now() < until) {
  }
}

// Deterministic executor: every actor runs on the shared VirtualClock.
class VirtualExecutor final : public Executor, public EventTarget {
 public:
  VirtualExecutor() = default;
  VirtualExecutor(const VirtualExecutor&) = delete;
  VirtualExecutor& operator=(const VirtualExecutor&) = delete;

  VirtualClock& clock() noexcept { return clock_; }

  ActorId add(Actor* actor) {
    slots_.push_back(Slot{actor});
    return static_cast<ActorId>(slots_.size() - 1);
  }

  Nanos now() const override { return clock_.now(); }
  bool virtual_time() const noexcept override { return true; }
  void burn(Nanos) override {}

  void wake(ActorId id) override {
    Slot& s = slots_.at(id);
    if (s.state != State::Idle) return;
    s.state = State::Scheduled;
    clock_.schedule(clock_.now(), this, static_cast<std::uint64_t>(id) << 1);
  }

  Nanos busy_ns(ActorId id) const { return slots_.at(id).busy; }
  bool idle(ActorId id) const { return slots_.at(id).state == State::Idle; }

  // Fires events until `done()` holds or the calendar runs dry. Returns true
  // if `done()` was reached.
  template <typename Pred>
  bool run_while_not(Pred done, Nanos deadline = kNever) {
    while (!done()) {
      if (clock_.empty() || clock_.next_time() > deadline) return false;
      clock_.run_one();
    }
    return true;
  }

  void on_event(Nanos now, std::uint64_t tag) override {
    const auto id = static_cast<ActorId>(tag >> 1);
    Slot& s = slots_[id];
    if (tag & 1) s.actor->end(now);
    start(id, now);
  }

 private:
  enum class State : std::uint8_t { Idle, Scheduled, Busy };
  struct Slot {
    Actor* actor;
    State state = State::Idle;
    Nanos busy = 0;
  };

  void start(ActorId id, Nanos now) {
    Slot& s = slots_[id];
    s.state = State::Busy;
    const auto cost = s.actor->begin(now);
    if (!cost) {
      s.state = State::Idle;
      return;
    }
    const Nanos c = std::max<Nanos>(1, *cost);
    s.busy += c;
    clock_.schedule(now + c, this, (static_cast<std::uint64_t>(id) << 1) | 1);
  }

  VirtualClock clock_;
  std::vector<Slot> slots_;
};

// One std::thread per actor. Idle actors back off with yield and short sleeps;
// wake() is a no-op because every actor polls.
class WallExecutor final : public Executor {
 public:
  explicit WallExecutor(bool spin_compute = true) : spin_(spin_compute), t0_(std::chrono::steady_clock::now()) {}
  WallExecutor(const WallExecutor&) = delete;
  WallExecutor& operator=(const WallExecutor&) = delete;
  ~WallExecutor() override { stop(); }

  ActorId add(Actor* actor) {
    if (running_) throw std::logic_error("WallExecutor: add after start");
    actors_.push_back(actor);
    return static_cast<ActorId>(actors_.size() - 1);
  }

  Nanos now() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0_).count();
  }
  bool virtual_time() const noexcept override { return false; }
  void wake(ActorId) override {}
  void burn(Nanos ns) override {
    if (spin_) spin_for(ns);
  }

  void start() {
    if (running_) return;
    running_ = true;
    stop_.store(false, std::memory_order_relaxed);
    for (auto* a : actors_) threads_.emplace_back([this, a] { loop(*a); });
  }

  void stop() {
    stop_.store(true, std::memory_order_release);
    for (auto& t : threads_)
      if (t.joinable()) t.join();
    threads_.clear();
    running_ = false;
  }

 private:
  void loop(Actor& a) {
    unsigned idle = 0;
    unsigned worked = 0;
    while (!stop_.load(std::memory_order_acquire)) {
      if (!a.begin(now())) {
        if (++idle < 64) {
          std::this_thread::yield();
        } else {
          std::this_thread::sleep_for(std::chrono::microseconds(20));
        }
        continue;
      }
      idle = 0;
      a.end(now());
      if ((++worked & 15) == 0) std::this_thread::yield();
    }
  }

  bool spin_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<Actor*> actors_;
  std::vector<std::thread> threads_;
  std::atomic<bool> stop_{false};
  bool running_ = false;
};

}  // namespace ringrt
