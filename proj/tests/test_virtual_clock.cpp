#include <gtest/gtest.h>

#include <ringrt/virtual_clock.hpp>

#include <vector>

using namespace ringrt;

namespace {

struct Recorder : EventTarget {
  std::vector<std::pair<Nanos, std::uint64_t>> fired;
  void on_event(Nanos now, std::uint64_t tag) override { fired.emplace_back(now, tag); }
};

}  // namespace

TEST(VirtualClock, FiresInTimeThenInsertionOrder) {
  VirtualClock c;
  Recorder r;
  c.schedule(50, &r, 1);
  c.schedule(10, &r, 2);
  c.schedule(50, &r, 3);
  c.schedule(10, &r, 4);
  while (c.run_one()) {
  }
  const std::vector<std::pair<Nanos, std::uint64_t>> want{{10, 2}, {10, 4}, {50, 1}, {50, 3}};
  EXPECT_EQ(r.fired, want);
  EXPECT_EQ(c.now(), 50);
  EXPECT_EQ(c.fired(), 4u);
}

TEST(VirtualClock, RefusesThePast) {
  VirtualClock c;
  Recorder r;
  c.schedule(100, &r);
  c.run_one();
  EXPECT_THROW(c.schedule(99, &r), std::logic_error);
  EXPECT_NO_THROW(c.schedule(100, &r));
}

TEST(VirtualClock, RunUntilAdvancesEvenWithoutEvents) {
  VirtualClock c;
  Recorder r;
  c.schedule(5, &r);
  c.schedule(20, &r);
  EXPECT_EQ(c.run_until(10), 1u);
  EXPECT_EQ(c.now(), 10);
  EXPECT_EQ(c.next_time(), 20);
  EXPECT_EQ(c.run_until(kNever), 1u);
  EXPECT_TRUE(c.empty());
  EXPECT_EQ(c.next_time(), kNever);
}

TEST(VirtualClock, EventsScheduledWhileFiringKeepOrder) {
  VirtualClock c;
  struct Chain : EventTarget {
    VirtualClock* clock;
    std::vector<std::uint64_t> seen;
    void on_event(Nanos now, std::uint64_t tag) override {
      seen.push_back(tag);
      if (tag < 5) clock->schedule(now, this, tag + 10);
    }
  } chain;
  chain.clock = &c;
  c.schedule(0, &chain, 1);
  c.schedule(0, &chain, 2);
  while (c.run_one()) {
  }
  const std::vector<std::uint64_t> want{1, 2, 11, 12};
  EXPECT_EQ(chain.seen, want);
}
