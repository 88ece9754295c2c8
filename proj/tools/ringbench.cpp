#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bench/commands.hpp"
#include "bench/config.hpp"

namespace fs = std::filesystem;
using namespace ringbench;

namespace {

constexpr int kPass = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string path;
  std::string out;
  bool plot = false;
  bool dump_defaults = false;
  bool quiet = false;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.backend.empty()) {
    if (o.backend == "sim") {
      cfg.backend = BackendKind::Sim;
    } else if (o.backend == "native") {
      cfg.backend = BackendKind::Native;
    } else {
      throw ConfigInvalid("backend", "unknown value '" + o.backend + "' (expected one of: sim, native)");
    }
  }
  if (!o.path.empty()) cfg.native.path = o.path;
  if (o.plot && o.out.empty()) throw ConfigInvalid("--plot", "needs --out to know where to write images");
  return cfg;
}

void emit(const Options& o, const std::string& name, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(o.out);
  const fs::path p = fs::path(o.out) / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  std::cerr << "wrote " << p.string() << '\n';
}

Progress progress_sink(const Options& o) {
  if (o.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ringbench: async I/O runtime experiments on a simulated or native device"};
  app.require_subcommand(0, 1);
  Options o;
  app.add_flag("--dump-defaults", o.dump_defaults, "Print the default configuration and exit");
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON configuration file");
    sub->add_option("--seed", o.seed, "Override the seed");
    sub->add_option("--backend", o.backend, "sim or native");
    sub->add_option("--path", o.path, "Target file for the native backend");
    sub->add_option("--out", o.out, "Directory for CSV (and plot) output; stdout when omitted");
    sub->add_flag("--plot", o.plot, "Also write SVG plots next to the CSV");
    sub->add_flag("--quiet", o.quiet, "No progress on stderr");
  };
  auto* qd = app.add_subcommand("sweep-qd", "IOPS over a queue-depth sweep");
  auto* cb = app.add_subcommand("sweep-callback", "IOPS over post-I/O callback cost, inline vs I/O threads");
  auto* sc = app.add_subcommand("scaling-trace", "Dynamic vs static pool on a square-wave load");
  auto* vf = app.add_subcommand("verify", "Run the invariant suite");
  for (auto* s : {qd, cb, sc, vf}) common(s);

  CLI11_PARSE(app, argc, argv);

  if (o.dump_defaults) {
    std::cout << dump_config(ExperimentConfig{});
    return kPass;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kConfigError;
  }

  try {
    const ExperimentConfig cfg = resolve(o);
    const auto progress = progress_sink(o);
    if (qd->parsed()) {
      const std::string csv = cmd_sweep_qd(cfg, progress);
      emit(o, "sweep_qd.csv", csv);
      if (o.plot) emit(o, "sweep_qd.svg", svg_plot(csv, "qd", "iops", "", "IOPS vs queue depth", true));
    } else if (cb->parsed()) {
      const std::string csv = cmd_sweep_callback(cfg, progress);
      emit(o, "sweep_callback.csv", csv);
      if (o.plot) {
        emit(o, "sweep_callback.svg",
             svg_plot(csv, "callback_cost_ns", "iops", "mode", "IOPS vs post-I/O callback cost", false));
      }
    } else if (sc->parsed()) {
      const ScalingTrace t = cmd_scaling_trace(cfg, progress);
      emit(o, "scaling_metrics.csv", t.metrics_csv);
      emit(o, "scaling_timeline.csv", t.timeline_csv);
      emit(o, "scaling_phases.csv", t.phases_csv);
      if (o.plot) {
        emit(o, "scaling_timeline.svg",
             svg_plot(t.timeline_csv, "time_ns", "active", "architecture", "Active I/O instances", false));
      }
    } else if (vf->parsed()) {
      const VerifyReport r = cmd_verify(cfg, progress);
      emit(o, "verify.txt", r.render());
      return r.all_pass() ? kPass : kCheckFailed;
    }
  } catch (const ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ringrt::UnsupportedPlatform& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kPass;
}
