#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

#include "types.hpp"

namespace ringrt {

class EventTarget {
 public:
  virtual ~EventTarget() = default;
  virtual void on_event(Nanos now, std::uint64_t tag) = 0;
};

// Discrete-event calendar. Time never decreases; events with equal timestamps
// fire in insertion order.
class VirtualClock {
 public:
  Nanos now() const noexcept { return now_; }
  bool empty() const noexcept { return queue_.empty(); }
  std::size_t pending() const noexcept { return queue_.size(); }
  Nanos next_time() const noexcept { return queue_.empty() ? kNever : queue_.top().at; }
  std::uint64_t fired() const noexcept { return fired_; }

  void schedule(Nanos at, EventTarget* target, std::uint64_t tag = 0) {
    if (at < now_) throw std::logic_error("VirtualClock: event scheduled in the past");
    queue_.push(Event{at, seq_++, target, tag});
  }

  // Fires the earliest event. Returns false when the calendar is empty.
  bool run_one() {
    if (queue_.empty()) return false;
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    ++fired_;
    ev.target->on_event(now_, ev.tag);
    return true;
  }

  // Fires every event with timestamp <= t, then moves the clock to t.
  std::size_t run_until(Nanos t) {
    std::size_t n = 0;
    while (!queue_.empty() && queue_.top().at <= t) {
      run_one();
      ++n;
    }
    if (t > now_ && t != kNever) now_ = t;
    return n;
  }

  // Moves the clock forward without firing anything (wall-clock drivers).
  void advance_to(Nanos t) {
    if (t > now_) now_ = t;
  }

 private:
  struct Event {
    Nanos at;
    std::uint64_t seq;
    EventTarget* target;
    std::uint64_t tag;
    bool operator>(const Event& o) const noexcept { return at != o.at ? at > o.at : seq > o.seq; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  Nanos now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t fired_ = 0;
};

}  // namespace ringrt
