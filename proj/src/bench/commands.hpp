#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bench/config.hpp"

namespace ringbench {

// Optional progress sink; commands call it once per finished run.
using Progress = std::function<void(const std::string&)>;

// One row per (qd, run). In sim mode the little_iops column holds the
// closed-form prediction for the effective queue depth.
std::string cmd_sweep_qd(const ExperimentConfig& cfg, const Progress& progress = {});

// Rows for {inline_callbacks, io_threads} x callback cost on a static pool
// with random reads.
std::string cmd_sweep_callback(const ExperimentConfig& cfg, const Progress& progress = {});

struct ScalingTrace {
  std::string metrics_csv;   // one row per architecture (static_pool, dynamic_pool)
  std::string timeline_csv;  // architecture,time_ns,active
  std::string phases_csv;    // architecture,phase,start_ns,end_ns,peak,iops
};
ScalingTrace cmd_scaling_trace(const ExperimentConfig& cfg, const Progress& progress = {});

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<Check> checks;
  bool all_pass() const;
  std::string render() const;  // one "check <name> PASS|FAIL <detail>" line each, then "result ..."
};
VerifyReport cmd_verify(const ExperimentConfig& cfg, const Progress& progress = {});

// Static line chart of `y_col` against `x_col`, one series per distinct value
// of `series_col` (empty: single series). Values are averaged per x.
std::string svg_plot(const std::string& csv, const std::string& x_col, const std::string& y_col,
                     const std::string& series_col, const std::string& title, bool log_x);

// Builds the single-I/O workload for a sweep point.
ringrt::Workload point_workload(const ExperimentConfig& cfg, OpMix mix, std::uint64_t ops, std::size_t concurrency,
                                Nanos callback_cost);

}  // namespace ringbench
