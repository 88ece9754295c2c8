#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <thread>

#include "executor.hpp"
#include "ring_core.hpp"

namespace ringrt {

enum class HandleStatus : std::uint8_t { Queued, Submitted, Done };

inline const char* to_string(HandleStatus s) noexcept {
  switch (s) {
    case HandleStatus::Queued: return "queued";
    case HandleStatus::Submitted: return "submitted";
    case HandleStatus::Done: return "done";
  }
  return "?";
}

struct HandleState;

// Work to run on the reaping thread right after a handle completes (inline
// callback execution).
class Continuation {
 public:
  virtual ~Continuation() = default;
  virtual Nanos inline_cost(const HandleState& h) const = 0;
  virtual void run_inline(HandleState& h, ActorId reaper, Nanos now) = 0;
};

// Shared record behind a request handle. The completion slot has a single
// writer (the reaping thread); status is published with release ordering so a
// poller that observes Done also observes the completion.
struct HandleState {
  std::uint64_t handle_id = 0;
  IoRequest request;
  Completion completion;
  std::atomic<HandleStatus> status{HandleStatus::Queued};
  std::atomic<std::uint32_t> done_writes{0};

  // Routing and wake-up. `waiter` is woken when the handle completes.
  InstanceId instance = ~InstanceId{0};
  Executor* executor = nullptr;
  ActorId waiter = kNoActor;
  Continuation* continuation = nullptr;
  ActorId reaper = kNoActor;
  void* context = nullptr;  // owner's bookkeeping (e.g. the task awaiting it)

  void reset(std::uint64_t id, const IoRequest& req) {
    handle_id = id;
    request = req;
    completion = {};
    status.store(HandleStatus::Queued, std::memory_order_relaxed);
    done_writes.store(0, std::memory_order_relaxed);
    instance = ~InstanceId{0};
    continuation = nullptr;
    reaper = kNoActor;
  }

  HandleStatus poll() const noexcept { return status.load(std::memory_order_acquire); }

  void mark_submitted() noexcept {
    auto expected = HandleStatus::Queued;
    status.compare_exchange_strong(expected, HandleStatus::Submitted, std::memory_order_release,
                                   std::memory_order_relaxed);
  }

  // Returns false if the handle had already been completed (a double delivery).
  bool complete(const Completion& c, ActorId by) {
    if (done_writes.fetch_add(1, std::memory_order_relaxed) != 0) return false;
    Executor* const ex = executor;
    const ActorId w = waiter;
    completion = c;
    reaper = by;
    status.store(HandleStatus::Done, std::memory_order_release);
    if (ex && w != kNoActor) ex->wake(w);
    return true;
  }
};

class PoolShutdown : public std::runtime_error {
 public:
  PoolShutdown() : std::runtime_error("pool is shut down") {}
};

// User-facing handle returned by pool_submit. Copyable; polling never blocks.
class RequestHandle {
 public:
  RequestHandle() = default;
  explicit RequestHandle(std::shared_ptr<HandleState> s) : s_(std::move(s)) {}

  bool valid() const noexcept { return s_ != nullptr; }
  std::uint64_t id() const { return state().handle_id; }
  HandleStatus poll() const { return state().poll(); }
  bool done() const { return poll() == HandleStatus::Done; }

  const Completion& completion() const {
    if (!done()) throw std::logic_error("RequestHandle: completion read before Done");
    return s_->completion;
  }

  // Spins on poll() with bounded exponential backoff until Done. Only
  // meaningful when another thread drives the pool.
  Completion await_spin(std::chrono::nanoseconds max_backoff = std::chrono::microseconds(50)) const {
    auto backoff = std::chrono::nanoseconds(100);
    while (!done()) {
      if (backoff < std::chrono::microseconds(2)) {
        std::this_thread::yield();
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff = std::min(backoff * 2, max_backoff);
    }
    return s_->completion;
  }

  HandleState& state() const {
    if (!s_) throw std::logic_error("RequestHandle: empty handle");
    return *s_;
  }
  const std::shared_ptr<HandleState>& shared() const noexcept { return s_; }

 private:
  std::shared_ptr<HandleState> s_;
};

}  // namespace ringrt
