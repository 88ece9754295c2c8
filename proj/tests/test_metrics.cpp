#include <gtest/gtest.h>

#include <ringrt/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace ringrt;

namespace {

struct Sample {
  Nanos submit;
  Nanos complete;
  int kind;  // 0 ok, 1 canceled, 2 error
};

std::vector<Sample> trace(std::uint64_t seed, std::size_t n) {
  SplitMix rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Nanos s = static_cast<Nanos>(rng.below(50 * kMilli));
    // Log-uniform latencies from 1 us to 100 ms.
    const Nanos lat = static_cast<Nanos>(std::exp(std::log(1e3) + rng.unit() * std::log(1e5)));
    const int kind = rng.below(50) == 0 ? 2 : rng.below(50) == 0 ? 1 : 0;
    out.push_back({s, s + lat, kind});
  }
  return out;
}

MetricsReport report_of(const std::vector<Sample>& t, std::size_t from, std::size_t to) {
  MetricsReport r;
  r.run_id = "x";
  for (std::size_t i = from; i < to; ++i) {
    ++r.submitted;
    r.record_completion(t[i].submit, t[i].complete, t[i].kind == 0, t[i].kind == 1);
    r.window_end = std::max(r.window_end, t[i].complete);
  }
  return r;
}

}  // namespace

TEST(Histogram, ExactBelowOneMicrosecond) {
  LatencyHistogram h;
  for (Nanos v = 0; v < 1000; ++v) h.record(v);
  EXPECT_EQ(h.quantile(0.5), 499);
  EXPECT_EQ(h.quantile(1.0), 999);
  EXPECT_EQ(h.min(), 0);
}

TEST(Histogram, QuantilesWithinBucketWidth) {
  const auto t = trace(1, 200'000);
  LatencyHistogram h;
  std::vector<Nanos> lat;
  for (const auto& s : t) {
    h.record(s.complete - s.submit);
    lat.push_back(s.complete - s.submit);
  }
  std::sort(lat.begin(), lat.end());
  for (double q : {0.01, 0.1, 0.5, 0.9, 0.99, 0.999}) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(lat.size()))) - 1;
    const double exact = static_cast<double>(lat[rank]);
    EXPECT_NEAR(static_cast<double>(h.quantile(q)) / exact, 1.0, 0.05) << "q=" << q;
  }
  EXPECT_EQ(h.max(), lat.back());
}

TEST(Histogram, OverflowBucket) {
  LatencyHistogram h;
  h.record(20 * kSecond);
  EXPECT_EQ(h.quantile(0.5), 20 * kSecond);
  EXPECT_EQ(h.count(), 1u);
}

TEST(Merge, SingleReportIsIdentity) {
  const auto r = report_of(trace(2, 1000), 0, 1000);
  const MetricsReport one[] = {r};
  const MetricsReport m = merge(one);
  EXPECT_EQ(metrics_csv_row(m), metrics_csv_row(r));
  EXPECT_EQ(m.latency, r.latency);
  EXPECT_EQ(m.completion_series, r.completion_series);
}

TEST(Merge, DisjointShardsEqualWholeTrace) {
  const auto t = trace(3, 10'000);
  const auto whole = report_of(t, 0, t.size());
  const MetricsReport shards[] = {report_of(t, 0, 3000), report_of(t, 3000, 7777), report_of(t, 7777, t.size())};
  const MetricsReport m = merge(shards);
  EXPECT_EQ(m.submitted, whole.submitted);
  EXPECT_EQ(m.completed, whole.completed);
  EXPECT_EQ(m.canceled, whole.canceled);
  EXPECT_EQ(m.errored, whole.errored);
  EXPECT_EQ(m.latency, whole.latency);
  EXPECT_EQ(m.completion_series, whole.completion_series);
  EXPECT_EQ(m.window_end, whole.window_end);
  EXPECT_TRUE(m.conserved());
}

TEST(Merge, MismatchedRunsRejected) {
  MetricsReport a, b;
  a.run_id = "a";
  b.run_id = "b";
  const MetricsReport both[] = {a, b};
  EXPECT_THROW(merge(both), IncompatibleWindows);
  EXPECT_THROW(merge({}), std::invalid_argument);
}

TEST(Merge, TimelineSortedByTime) {
  MetricsReport a, b;
  a.active_instance_timeline = {{0, 4}, {30, 3}};
  b.active_instance_timeline = {{10, 2}};
  const MetricsReport both[] = {a, b};
  const auto m = merge(both);
  ASSERT_EQ(m.active_instance_timeline.size(), 3u);
  EXPECT_TRUE(std::is_sorted(m.active_instance_timeline.begin(), m.active_instance_timeline.end()));
}

TEST(Report, IopsAndConservation) {
  MetricsReport r;
  r.window_end = kSecond / 2;
  r.submitted = 3;
  r.record_completion(0, 10, true, false);
  r.record_completion(0, 10, false, true);
  r.record_completion(0, 10, false, false);
  EXPECT_TRUE(r.conserved());
  EXPECT_DOUBLE_EQ(r.iops(), 2.0);
  EXPECT_DOUBLE_EQ(r.iops_between(0, kMilli), 1000.0);
  r.submitted = 4;
  EXPECT_FALSE(r.conserved());
}

TEST(Report, CsvRowMatchesHeader) {
  const auto r = report_of(trace(4, 100), 0, 100);
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(count(metrics_csv_row(r)), count(metrics_csv_header()));
  EXPECT_NE(metrics_summary(r).find("iops"), std::string::npos);
}
