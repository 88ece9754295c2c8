#include <gtest/gtest.h>

#include <ringrt/executor.hpp>

#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

using namespace ringrt;

namespace {

// Runs `jobs` units of `cost` each, recording when each one ended.
struct Counter : Actor {
  int jobs = 0;
  Nanos cost = 0;
  std::vector<Nanos> ended;
  std::optional<Nanos> begin(Nanos) override {
    if (jobs == 0) return std::nullopt;
    --jobs;
    return cost;
  }
  void end(Nanos now) override { ended.push_back(now); }
};

}  // namespace

TEST(VirtualExecutor, ChargesCostsBackToBack) {
  VirtualExecutor ex;
  Counter a;
  a.jobs = 3;
  a.cost = 100;
  const ActorId id = ex.add(&a);
  ex.wake(id);
  ex.run_while_not([] { return false; });
  const std::vector<Nanos> want{100, 200, 300};
  EXPECT_EQ(a.ended, want);
  EXPECT_EQ(ex.busy_ns(id), 300);
  EXPECT_TRUE(ex.idle(id));
}

TEST(VirtualExecutor, ActorsRunConcurrentlyInVirtualTime) {
  VirtualExecutor ex;
  Counter a, b;
  a.jobs = b.jobs = 2;
  a.cost = 50;
  b.cost = 70;
  ex.wake(ex.add(&a));
  ex.wake(ex.add(&b));
  ex.run_while_not([] { return false; });
  EXPECT_EQ(a.ended.back(), 100);
  EXPECT_EQ(b.ended.back(), 140);
  EXPECT_EQ(ex.now(), 140);
}

TEST(VirtualExecutor, WakeOfBusyActorIsNoop) {
  VirtualExecutor ex;
  Counter a;
  a.jobs = 1;
  a.cost = 10;
  const ActorId id = ex.add(&a);
  ex.wake(id);
  ex.wake(id);
  ex.run_while_not([] { return false; });
  EXPECT_EQ(a.ended.size(), 1u);
}

TEST(VirtualExecutor, StopsAtDeadline) {
  VirtualExecutor ex;
  Counter a;
  a.jobs = 100;
  a.cost = 10;
  ex.wake(ex.add(&a));
  EXPECT_FALSE(ex.run_while_not([] { return false; }, 55));
  EXPECT_LE(ex.now(), 55);
  EXPECT_TRUE(ex.run_while_not([&] { return a.ended.size() >= 10; }));
}

TEST(WallExecutor, RunsEveryActorOnItsOwnThread) {
  struct Tracker : Actor {
    std::atomic<int> left{1000};
    std::thread::id tid;
    std::atomic<bool> switched{false};
    std::optional<Nanos> begin(Nanos) override {
      if (tid == std::thread::id{}) tid = std::this_thread::get_id();
      if (tid != std::this_thread::get_id()) switched = true;
      if (left.load() == 0) return std::nullopt;
      return 0;
    }
    void end(Nanos) override { --left; }
  };
  WallExecutor ex(false);
  Tracker a, b;
  ex.add(&a);
  ex.add(&b);
  ex.start();
  EXPECT_THROW(ex.add(&a), std::logic_error);
  const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while ((a.left > 0 || b.left > 0) && std::chrono::steady_clock::now() < until) std::this_thread::yield();
  ex.stop();
  EXPECT_EQ(a.left, 0);
  EXPECT_EQ(b.left, 0);
  EXPECT_FALSE(a.switched);
  EXPECT_NE(a.tid, b.tid);
}

TEST(WallExecutor, SpinBurnsRealTime) {
  const auto t0 = std::chrono::steady_clock::now();
  spin_for(2 * kMilli);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(2));
  WallExecutor quiet(false);
  const auto t1 = std::chrono::steady_clock::now();
  quiet.burn(50 * kMilli);
  EXPECT_LT(std::chrono::steady_clock::now() - t1, std::chrono::milliseconds(50));
}
