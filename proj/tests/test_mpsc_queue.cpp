#include <gtest/gtest.h>

#include <ringrt/mpsc_queue.hpp>

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

using namespace ringrt;

TEST(MpscQueue, RejectsNonPowerOfTwo) { EXPECT_THROW(BoundedMpscQueue<int>(3), std::invalid_argument); }

TEST(MpscQueue, FifoForOneProducer) {
  BoundedMpscQueue<int> q(4);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(q.try_push(i));
  EXPECT_FALSE(q.try_push(4));
  EXPECT_EQ(q.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(q.try_pop(), i);
  EXPECT_FALSE(q.try_pop());
  EXPECT_TRUE(q.try_push(5));
  EXPECT_EQ(q.try_pop(), 5);
}

TEST(MpscQueue, ManyProducersNoLossNoDuplicates) {
  constexpr int kProducers = 8;
  constexpr std::uint64_t kPer = 20'000;
  BoundedMpscQueue<std::uint64_t> q(64);
  std::atomic<std::uint64_t> races{0};
  std::vector<std::thread> producers;
  for (int p = 0; p < kProducers; ++p) {
    producers.emplace_back([&, p] {
      std::uint64_t local = 0;
      for (std::uint64_t i = 0; i < kPer;) {
        if (q.try_push(static_cast<std::uint64_t>(p) << 32 | i, &local)) {
          ++i;
        } else {
          std::this_thread::yield();
        }
      }
      races += local;
    });
  }
  std::vector<std::uint64_t> next(kProducers, 0);
  std::uint64_t got = 0;
  while (got < kProducers * kPer) {
    if (auto v = q.try_pop()) {
      const auto p = static_cast<int>(*v >> 32);
      const auto i = *v & 0xffffffffULL;
      // Per-producer order is preserved.
      ASSERT_EQ(i, next[p]);
      ++next[p];
      ++got;
    } else {
      std::this_thread::yield();
    }
  }
  for (auto& t : producers) t.join();
  EXPECT_FALSE(q.try_pop());
  for (auto n : next) EXPECT_EQ(n, kPer);
}
