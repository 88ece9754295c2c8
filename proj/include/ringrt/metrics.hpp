#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "types.hpp"

namespace ringrt {

// Latency histogram: exact 1 ns buckets below 1 us, then logarithmic buckets
// 5% wide up to 10 s, then one overflow bucket. Quantiles report the geometric
// centre of the bucket, clamped to the observed min/max.
class LatencyHistogram {
 public:
  static constexpr Nanos kLinearLimit = 1000;
  static constexpr Nanos kUpper = 10 * kSecond;
  static constexpr double kRatio = 1.05;

  LatencyHistogram() : counts_(bucket_count(), 0) {}

  static std::size_t log_buckets() {
    static const auto n = static_cast<std::size_t>(
        std::ceil(std::log(static_cast<double>(kUpper) / kLinearLimit) / std::log(kRatio)));
    return n;
  }
  static std::size_t bucket_count() { return static_cast<std::size_t>(kLinearLimit) + log_buckets() + 1; }

  static std::size_t bucket_of(Nanos v) {
    if (v < kLinearLimit) return static_cast<std::size_t>(std::max<Nanos>(0, v));
    if (v >= kUpper) return bucket_count() - 1;
    const auto i = static_cast<std::size_t>(std::log(static_cast<double>(v) / kLinearLimit) / std::log(kRatio));
    return static_cast<std::size_t>(kLinearLimit) + std::min(i, log_buckets() - 1);
  }

  void record(Nanos v) {
    v = std::max<Nanos>(0, v);
    ++counts_[bucket_of(v)];
    ++count_;
    min_ = std::min(min_, v);
    max_ = std::max(max_, v);
  }

  void merge(const LatencyHistogram& o) {
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    count_ += o.count_;
    min_ = std::min(min_, o.min_);
    max_ = std::max(max_, o.max_);
  }

  std::uint64_t count() const noexcept { return count_; }
  Nanos min() const noexcept { return count_ ? min_ : 0; }
  Nanos max() const noexcept { return count_ ? max_ : 0; }

  // Nearest-rank quantile, q in [0, 1].
  Nanos quantile(double q) const {
    if (count_ == 0) return 0;
    q = std::clamp(q, 0.0, 1.0);
    const auto rank = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_))));
    std::uint64_t seen = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      seen += counts_[i];
      if (seen >= rank) return std::clamp(representative(i), min_, max_);
    }
    return max_;
  }

  bool operator==(const LatencyHistogram& o) const {
    return count_ == o.count_ && min() == o.min() && max() == o.max() && counts_ == o.counts_;
  }

 private:
  static Nanos representative(std::size_t i) {
    if (i < static_cast<std::size_t>(kLinearLimit)) return static_cast<Nanos>(i);
    if (i == bucket_count() - 1) return kUpper;
    const double lo = kLinearLimit * std::pow(kRatio, static_cast<double>(i - kLinearLimit));
    return static_cast<Nanos>(std::llround(lo * std::sqrt(kRatio)));
  }

  std::vector<std::uint64_t> counts_;
  std::uint64_t count_ = 0;
  Nanos min_ = std::numeric_limits<Nanos>::max();
  Nanos max_ = 0;
};

struct InstanceMetrics {
  InstanceId id = 0;
  double utilization = 0.0;  // fraction of the window spent on submit/reap work
  Nanos io_busy_ns = 0;
  Nanos poll_busy_ns = 0;
  std::uint64_t inbox_peak = 0;
  std::uint64_t requests = 0;
  bool operator==(const InstanceMetrics&) const = default;
};

class IncompatibleWindows : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MetricsReport {
  std::string run_id;
  std::string label;
  Nanos window_start = 0;
  Nanos window_end = 0;

  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t canceled = 0;
  std::uint64_t errored = 0;
  LatencyHistogram latency;

  std::vector<InstanceMetrics> per_instance;
  std::uint64_t contention_events = 0;
  std::uint64_t cross_thread_msgs = 0;
  std::uint64_t retries = 0;
  std::uint64_t poll_misses = 0;
  std::uint64_t tasks_completed = 0;
  std::uint64_t tasklets_run = 0;
  std::uint64_t coroutine_resumes = 0;
  std::uint64_t max_frame_bytes = 0;
  std::vector<std::pair<Nanos, std::uint32_t>> active_instance_timeline;

  // Successful completions per fixed bucket of absolute time.
  Nanos series_bucket_ns = kMilli;
  std::vector<std::uint64_t> completion_series;

  // Instrumentation; all zero in a correct run.
  std::uint64_t double_completions = 0;
  std::uint64_t sq_producer_violations = 0;
  std::uint64_t cq_consumer_violations = 0;
  std::uint64_t inactive_deliveries = 0;
  std::uint64_t tasklet_thread_switches = 0;
  std::uint64_t callback_placement_violations = 0;

  Nanos elapsed() const noexcept { return window_end - window_start; }
  double iops() const noexcept {
    return elapsed() > 0 ? static_cast<double>(completed) * 1e9 / static_cast<double>(elapsed()) : 0.0;
  }
  bool conserved() const noexcept { return submitted == completed + canceled + errored; }

  Nanos poll_busy_total() const noexcept {
    Nanos t = 0;
    for (const auto& i : per_instance) t += i.poll_busy_ns;
    return t;
  }

  void record_completion(Nanos submit_time, Nanos complete_time, bool ok, bool canceled_op) {
    if (ok) {
      ++completed;
    } else if (canceled_op) {
      ++canceled;
    } else {
      ++errored;
    }
    latency.record(complete_time - submit_time);
    if (!ok) return;
    const auto b = static_cast<std::size_t>(std::max<Nanos>(0, complete_time) / series_bucket_ns);
    if (completion_series.size() <= b) completion_series.resize(b + 1, 0);
    ++completion_series[b];
  }

  // Successful completions per second over [from, to), using the series buckets.
  double iops_between(Nanos from, Nanos to) const {
    if (to <= from) return 0.0;
    std::uint64_t n = 0;
    for (std::size_t b = 0; b < completion_series.size(); ++b) {
      const Nanos t = static_cast<Nanos>(b) * series_bucket_ns;
      if (t >= from && t < to) n += completion_series[b];
    }
    return static_cast<double>(n) * 1e9 / static_cast<double>(to - from);
  }
};

// Combines per-thread or per-shard reports of one run.
inline MetricsReport merge(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("merge: no reports");
  MetricsReport out = reports.front();
  for (std::size_t k = 1; k < reports.size(); ++k) {
    const auto& r = reports[k];
    if (r.run_id != out.run_id) throw IncompatibleWindows("merge: reports belong to different runs");
    if (r.series_bucket_ns != out.series_bucket_ns) throw IncompatibleWindows("merge: series bucket widths differ");
    out.window_start = std::min(out.window_start, r.window_start);
    out.window_end = std::max(out.window_end, r.window_end);
    out.submitted += r.submitted;
    out.completed += r.completed;
    out.canceled += r.canceled;
    out.errored += r.errored;
    out.latency.merge(r.latency);
    out.per_instance.insert(out.per_instance.end(), r.per_instance.begin(), r.per_instance.end());
    out.contention_events += r.contention_events;
    out.cross_thread_msgs += r.cross_thread_msgs;
    out.retries += r.retries;
    out.poll_misses += r.poll_misses;
    out.tasks_completed += r.tasks_completed;
    out.tasklets_run += r.tasklets_run;
    out.coroutine_resumes += r.coroutine_resumes;
    out.max_frame_bytes = std::max(out.max_frame_bytes, r.max_frame_bytes);
    out.active_instance_timeline.insert(out.active_instance_timeline.end(), r.active_instance_timeline.begin(),
                                        r.active_instance_timeline.end());
    if (out.completion_series.size() < r.completion_series.size()) out.completion_series.resize(r.completion_series.size(), 0);
    for (std::size_t b = 0; b < r.completion_series.size(); ++b) out.completion_series[b] += r.completion_series[b];
    out.double_completions += r.double_completions;
    out.sq_producer_violations += r.sq_producer_violations;
    out.cq_consumer_violations += r.cq_consumer_violations;
    out.inactive_deliveries += r.inactive_deliveries;
    out.tasklet_thread_switches += r.tasklet_thread_switches;
    out.callback_placement_violations += r.callback_placement_violations;
  }
  std::stable_sort(out.active_instance_timeline.begin(), out.active_instance_timeline.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

inline const char* metrics_csv_header() {
  return "run_id,label,elapsed_ns,iops,submitted,completed,canceled,errored,lat_p50_ns,lat_p99_ns,lat_max_ns,"
         "poll_busy_ns,contention_events,cross_thread_msgs,retries,poll_misses,instances,mean_utilization,"
         "inbox_peak,min_active,max_active";
}

inline std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string metrics_csv_row(const MetricsReport& r) {
  double util = 0.0;
  std::uint64_t inbox_peak = 0;
  for (const auto& i : r.per_instance) {
    util += i.utilization;
    inbox_peak = std::max(inbox_peak, i.inbox_peak);
  }
  if (!r.per_instance.empty()) util /= static_cast<double>(r.per_instance.size());
  std::uint32_t min_active = 0, max_active = 0;
  if (!r.active_instance_timeline.empty()) {
    min_active = max_active = r.active_instance_timeline.front().second;
    for (const auto& [t, a] : r.active_instance_timeline) {
      min_active = std::min(min_active, a);
      max_active = std::max(max_active, a);
    }
  }
  std::ostringstream os;
  os << r.run_id << ',' << r.label << ',' << r.elapsed() << ',' << fixed(r.iops(), 1) << ',' << r.submitted << ','
     << r.completed << ',' << r.canceled << ',' << r.errored << ',' << r.latency.quantile(0.5) << ','
     << r.latency.quantile(0.99) << ',' << r.latency.max() << ',' << r.poll_busy_total() << ',' << r.contention_events
     << ',' << r.cross_thread_msgs << ',' << r.retries << ',' << r.poll_misses << ',' << r.per_instance.size() << ','
     << fixed(util, 4) << ',' << inbox_peak << ',' << min_active << ',' << max_active;
  return os.str();
}

inline std::string metrics_summary(const MetricsReport& r) {
  std::ostringstream os;
  os << "run " << r.run_id << (r.label.empty() ? "" : " [" + r.label + "]") << '\n'
     << "  elapsed_ns      " << r.elapsed() << '\n'
     << "  iops            " << fixed(r.iops(), 1) << '\n'
     << "  submitted       " << r.submitted << " (completed " << r.completed << ", canceled " << r.canceled
     << ", errored " << r.errored << ")\n"
     << "  latency_ns      p50 " << r.latency.quantile(0.5) << "  p99 " << r.latency.quantile(0.99) << "  max "
     << r.latency.max() << '\n'
     << "  poll_busy_ns    " << r.poll_busy_total() << '\n'
     << "  contention      " << r.contention_events << '\n'
     << "  cross_thread    " << r.cross_thread_msgs << '\n';
  return os.str();
}

}  // namespace ringrt
