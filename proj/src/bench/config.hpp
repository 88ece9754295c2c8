#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <ringrt/architectures.hpp>
#include <ringrt/native_backend.hpp>

namespace ringbench {

using ringrt::Nanos;

class ConfigInvalid : public std::runtime_error {
 public:
  ConfigInvalid(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class BackendKind : std::uint8_t { Sim, Native };
enum class OpMix : std::uint8_t { SeqRead, RandRead, WriteMix };

struct WorkloadConfig {
  std::uint64_t op_count = 1'000'000;
  OpMix op_kind = OpMix::SeqRead;
  double write_fraction = 0.5;  // write_mix only
  std::uint32_t block_size = 4096;
  std::uint32_t queue_depth = 32;
  Nanos callback_cost_ns = 0;
  // Sim only: when positive, each sweep point runs enough operations to span
  // this much simulated time at the predicted rate (op_count becomes a floor).
  Nanos min_duration_ns = 0;
  // Task corpus (JSON lines) used by verify instead of generated tasks.
  std::string corpus_path;

  bool operator==(const WorkloadConfig&) const = default;
};

struct ArchitectureConfig {
  ringrt::Architecture kind = ringrt::Architecture::SharedNothing;
  std::uint32_t threads = 1;
  std::uint32_t instances = 1;
  ringrt::InstanceThreading threading = ringrt::InstanceThreading::SingleThread;
  ringrt::DispatchPolicy policy = ringrt::DispatchPolicy::RoundRobin;
  ringrt::ExecMode exec_mode = ringrt::ExecMode::IoThreads;
  std::size_t inbox_capacity = 1024;
  std::size_t batch = 32;
  ringrt::ScalingConfig scaling;

  bool operator==(const ArchitectureConfig&) const = default;
};

struct CallbackSweep {
  std::vector<Nanos> cost_list_ns = {0, 1'000, 10'000, 100'000};
  // Enough workers and tasks that the device, not callback work, limits
  // io_threads mode up to 100 us callbacks on the default device.
  std::uint32_t workers = 128;
  std::uint32_t instances = 1;
  std::uint32_t tasks_per_worker = 2;
  std::uint64_t op_count = 128'000;

  bool operator==(const CallbackSweep&) const = default;
};

struct LoadProfile {
  double peak_per_s = 0.0;  // 0: half of what the pool and device can sustain
  double trough_fraction = 0.05;
  Nanos phase_ns = 50 * ringrt::kMilli;
  Nanos duration_ns = 400 * ringrt::kMilli;
  std::uint32_t workers = 4;
  bool constant = false;  // hold the peak rate for the whole run

  bool operator==(const LoadProfile&) const = default;
};

struct VerifyConfig {
  std::uint64_t requests = 20'000;  // per architecture x scheme run
  std::uint32_t seeds = 2;
  std::uint64_t spsc_items = 200'000;
  std::uint32_t corpus_tasks = 64;

  bool operator==(const VerifyConfig&) const = default;
};

struct ExperimentConfig {
  BackendKind backend = BackendKind::Sim;
  ringrt::DeviceModel device = ringrt::DeviceModel::desk_nvme();
  ringrt::NativeConfig native;
  ringrt::ApiConfig api;
  ringrt::CostModel costs;
  ArchitectureConfig architecture;
  ringrt::Scheme scheme = ringrt::Scheme::Callback;
  WorkloadConfig workload;
  std::vector<std::uint32_t> qd_list = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  CallbackSweep callback;
  LoadProfile load;
  VerifyConfig verify;
  std::uint32_t runs = 10;
  bool preconditioning = true;
  std::uint64_t seed = 1;
  ringrt::ClockMode clock = ringrt::ClockMode::Virtual;
  bool spin_compute = false;

  bool operator==(const ExperimentConfig&) const = default;
};

const char* to_string(BackendKind b) noexcept;
const char* to_string(OpMix m) noexcept;

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Missing fields keep their defaults; unknown fields and wrong types throw
// ConfigInvalid naming the offending field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& cfg);

// Structural checks that make a run impossible. Ring-queue invariants are
// left to `verify`, which reports them as failed checks instead.
void validate_config(const ExperimentConfig& cfg, bool ring_invariants = true);

// Base run configuration shared by the commands.
ringrt::RunConfig run_config(const ExperimentConfig& cfg);

}  // namespace ringbench
