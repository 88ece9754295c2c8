#include "bench/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <ringrt/corpus.hpp>
#include <ringrt/metrics.hpp>
#include <ringrt/spsc_ring.hpp>

namespace ringbench {

using namespace ringrt;

namespace {

IoGeometry geometry_of(const ExperimentConfig& cfg) { return {cfg.device.capacity_bytes, cfg.device.block_size}; }

std::uint32_t blocks_of(const ExperimentConfig& cfg) { return cfg.workload.block_size / cfg.device.block_size; }

// Mean service time the device sees for `mix`; reads off the sequential path
// pay the random-read multiplier.
double effective_service_ns(const ExperimentConfig& cfg, OpMix mix) {
  const double s = static_cast<double>(cfg.device.service_time);
  const double m = cfg.device.random_read_multiplier;
  switch (mix) {
    case OpMix::SeqRead: return s;
    case OpMix::RandRead: return s * m;
    case OpMix::WriteMix: return s * ((1.0 - cfg.workload.write_fraction) * m + cfg.workload.write_fraction);
  }
  return s;
}

double little_iops(const ExperimentConfig& cfg, OpMix mix, std::size_t qd) {
  const double busy = static_cast<double>(std::min<std::size_t>(qd, cfg.device.parallelism));
  return busy * 1e9 / effective_service_ns(cfg, mix);
}

std::uint64_t point_ops(const ExperimentConfig& cfg, double predicted) {
  std::uint64_t ops = cfg.workload.op_count;
  if (cfg.backend == BackendKind::Sim && cfg.workload.min_duration_ns > 0) {
    const double need = std::ceil(predicted * static_cast<double>(cfg.workload.min_duration_ns) / 1e9);
    ops = std::max<std::uint64_t>(ops, static_cast<std::uint64_t>(need));
  }
  return ops;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// -- native runs -------------------------------------------------------------

MetricsReport native_point(const ExperimentConfig& cfg, std::size_t qd, std::uint64_t ops, const std::string& run_id) {
  auto backend = native_open(cfg.native);
  const std::uint32_t bs = cfg.workload.block_size;
  if (backend->capacity_bytes() < bs) throw ConfigInvalid("native.path", "target smaller than one block");
  const std::uint64_t blocks = backend->capacity_bytes() / bs;
  std::vector<std::uint32_t> bufs;
  for (std::size_t i = 0; i < qd; ++i) bufs.push_back(backend->add_buffer(bs));

  SplitMix rng(cfg.seed);
  std::uint64_t issued = 0;
  auto make = [&](std::uint32_t buf) {
    IoRequest r;
    const bool write = cfg.workload.op_kind == OpMix::WriteMix && rng.unit() < cfg.workload.write_fraction;
    r.op = write ? OpKind::Write : OpKind::Read;
    const std::uint64_t block =
        cfg.workload.op_kind == OpMix::SeqRead ? issued % blocks : rng.below(blocks);
    r.offset = block * bs;
    r.length = bs;
    r.buffer_id = buf;
    r.user_data = buf;
    ++issued;
    return r;
  };

  MetricsReport rep;
  rep.run_id = run_id;
  rep.label = "sweep_qd";
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  };
  rep.window_start = 0;
  std::vector<std::uint32_t> idle(bufs.rbegin(), bufs.rend());
  std::uint64_t done = 0;
  while (done < ops) {
    while (!idle.empty() && issued < ops) {
      const IoRequest r = make(idle.back());
      if (!backend->push_submission(r).accepted()) {
        --issued;
        ++rep.retries;
        break;
      }
      idle.pop_back();
      ++rep.submitted;
    }
    backend->progress();
    for (const Completion& c : backend->reap_completions(qd)) {
      rep.record_completion(c.submit_time, c.complete_time, c.ok(), c.status == CompletionStatus::Canceled);
      idle.push_back(static_cast<std::uint32_t>(c.user_data));
      ++done;
    }
  }
  rep.window_end = std::max<Nanos>(1, wall());
  return rep;
}

// -- verify helpers ------------------------------------------------------------

std::vector<std::shared_ptr<const TaskSpec>> verify_specs(const ExperimentConfig& cfg) {
  std::vector<TaskSpec> specs;
  if (!cfg.workload.corpus_path.empty()) {
    std::ifstream in(cfg.workload.corpus_path);
    if (!in) throw ConfigInvalid("workload.corpus_path", "cannot read " + cfg.workload.corpus_path);
    try {
      specs = read_corpus(in);
    } catch (const std::exception& e) {
      throw ConfigInvalid("workload.corpus_path", e.what());
    }
    if (specs.empty()) throw ConfigInvalid("workload.corpus_path", "corpus is empty");
  } else {
    specs = generate_corpus(cfg.seed, cfg.verify.corpus_tasks);
  }
  std::vector<std::shared_ptr<const TaskSpec>> out;
  for (auto& s : specs) out.push_back(std::make_shared<const TaskSpec>(std::move(s)));
  return out;
}

bool spsc_fifo_stress(std::uint64_t items, std::uint64_t seed, std::string& detail) {
  SpscRing<std::uint64_t> ring(8);
  std::uint64_t errors = 0;
  std::thread consumer([&] {
    std::uint64_t expect = 0;
    while (expect < items) {
      if (auto v = ring.try_pop()) {
        if (*v != expect) ++errors;
        expect = *v + 1;
      } else {
        std::this_thread::yield();
      }
    }
  });
  SplitMix rng(seed);
  for (std::uint64_t i = 0; i < items;) {
    if (ring.try_push(i)) {
      ++i;
      if (rng.below(64) == 0) std::this_thread::yield();
    } else {
      std::this_thread::yield();
    }
  }
  consumer.join();
  detail = std::to_string(items) + " items, " + std::to_string(errors) + " order errors";
  return errors == 0;
}

std::size_t count_kind(const std::string& trace_csv, const std::string& kind) {
  std::size_t n = 0;
  std::istringstream is(trace_csv);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto cells = split(line);
    if (cells.size() > 1 && cells[1] == kind) ++n;
  }
  return n;
}

}  // namespace

Workload point_workload(const ExperimentConfig& cfg, OpMix mix, std::uint64_t ops, std::size_t concurrency,
                        Nanos callback_cost) {
  const std::uint32_t blocks = blocks_of(cfg);
  Workload wl;
  switch (mix) {
    case OpMix::SeqRead:
      wl.specs.push_back(io_task_spec(OpKind::Read, OffsetMode::Sequential, callback_cost, blocks));
      break;
    case OpMix::RandRead:
      wl.specs.push_back(io_task_spec(OpKind::Read, OffsetMode::FromState, callback_cost, blocks));
      break;
    case OpMix::WriteMix: {
      // Twenty specs with writes spread evenly at the configured fraction.
      auto read = io_task_spec(OpKind::Read, OffsetMode::FromState, callback_cost, blocks);
      auto write = io_task_spec(OpKind::Write, OffsetMode::FromState, callback_cost, blocks);
      const double f = cfg.workload.write_fraction;
      for (int i = 0; i < 20; ++i) {
        const bool w = std::floor((i + 1) * f) > std::floor(i * f);
        wl.specs.push_back(w ? write : read);
      }
      break;
    }
  }
  wl.task_count = ops;
  wl.concurrency = concurrency;
  wl.geometry = geometry_of(cfg);
  return wl;
}

std::string cmd_sweep_qd(const ExperimentConfig& cfg, const Progress& progress) {
  validate_config(cfg);
  std::ostringstream os;
  os << "qd,run,little_iops," << metrics_csv_header() << '\n';
  const OpMix mix = cfg.workload.op_kind;
  const std::uint32_t threads = cfg.architecture.threads;

  auto sim_point = [&](std::size_t conc, std::uint64_t ops, std::uint64_t seed, const std::string& id) {
    RunConfig rc = run_config(cfg);
    rc.seed = seed;
    rc.run_id = id;
    rc.label = "sweep_qd";
    return run_workload(rc, point_workload(cfg, mix, ops, conc, cfg.workload.callback_cost_ns)).report;
  };

  if (cfg.preconditioning) {
    const std::size_t qd = cfg.qd_list.front();
    const std::size_t conc = std::max<std::size_t>(1, qd / threads);
    const std::uint64_t ops = point_ops(cfg, little_iops(cfg, mix, conc * threads));
    if (cfg.backend == BackendKind::Native) {
      native_point(cfg, qd, ops, "precondition");
    } else {
      sim_point(conc, ops, cfg.seed ^ 0x9e3779b97f4a7c15ULL, "precondition");
    }
    if (progress) progress("preconditioning run done (discarded)");
  }

  for (const std::uint32_t qd : cfg.qd_list) {
    const std::size_t conc = std::max<std::size_t>(1, qd / threads);
    const std::size_t eff = cfg.backend == BackendKind::Native ? qd : conc * threads;
    const double predicted = little_iops(cfg, mix, eff);
    const std::uint64_t ops = point_ops(cfg, predicted);
    for (std::uint32_t run = 0; run < cfg.runs; ++run) {
      const std::string id = "qd" + std::to_string(eff) + "-r" + std::to_string(run);
      MetricsReport rep;
      if (cfg.backend == BackendKind::Native) {
        rep = native_point(cfg, qd, ops, id);
      } else {
        rep = sim_point(conc, ops, cfg.seed + run, id);
      }
      os << eff << ',' << run << ',' << (cfg.backend == BackendKind::Sim ? fixed(predicted, 1) : std::string()) << ','
         << metrics_csv_row(rep) << '\n';
      if (progress) progress(id + " iops=" + fixed(rep.iops(), 1));
    }
  }
  return os.str();
}

std::string cmd_sweep_callback(const ExperimentConfig& cfg, const Progress& progress) {
  validate_config(cfg);
  if (cfg.backend != BackendKind::Sim) throw ConfigInvalid("backend", "sweep-callback runs on the sim backend only");
  std::ostringstream os;
  os << "mode,callback_cost_ns,run," << metrics_csv_header() << '\n';

  auto point = [&](ExecMode mode, Nanos cost, std::uint64_t seed, const std::string& id) {
    RunConfig rc = run_config(cfg);
    rc.arch = Architecture::StaticPool;
    rc.scheme = cfg.scheme == Scheme::Full ? Scheme::Callback : cfg.scheme;
    rc.exec_mode = mode;
    rc.threads = cfg.callback.workers;
    rc.instances = cfg.callback.instances;
    rc.seed = seed;
    rc.run_id = id;
    rc.label = "sweep_callback";
    return run_workload(rc, point_workload(cfg, OpMix::RandRead, cfg.callback.op_count, cfg.callback.tasks_per_worker,
                                           cost))
        .report;
  };

  if (cfg.preconditioning) {
    point(ExecMode::IoThreads, cfg.callback.cost_list_ns.front(), cfg.seed ^ 0x9e3779b97f4a7c15ULL, "precondition");
    if (progress) progress("preconditioning run done (discarded)");
  }
  for (const ExecMode mode : {ExecMode::InlineCallbacks, ExecMode::IoThreads}) {
    for (const Nanos cost : cfg.callback.cost_list_ns) {
      for (std::uint32_t run = 0; run < cfg.runs; ++run) {
        const std::string id = std::string(to_string(mode)) + "-c" + std::to_string(cost) + "-r" + std::to_string(run);
        const MetricsReport rep = point(mode, cost, cfg.seed + run, id);
        os << to_string(mode) << ',' << cost << ',' << run << ',' << metrics_csv_row(rep) << '\n';
        if (progress) progress(id + " iops=" + fixed(rep.iops(), 1));
      }
    }
  }
  return os.str();
}

ScalingTrace cmd_scaling_trace(const ExperimentConfig& cfg, const Progress& progress) {
  validate_config(cfg);
  if (cfg.backend != BackendKind::Sim) throw ConfigInvalid("backend", "scaling-trace runs on the sim backend only");
  const LoadProfile& load = cfg.load;
  const std::uint32_t k = cfg.architecture.instances;
  double peak = load.peak_per_s;
  if (peak <= 0.0) {
    const double device = static_cast<double>(cfg.device.parallelism) * 1e9 / static_cast<double>(cfg.device.service_time);
    const double rings = static_cast<double>(k * cfg.api.cq_entries) * 1e9 / static_cast<double>(cfg.device.service_time);
    peak = 0.5 * std::min(device, rings);
  }
  const double trough = load.constant ? 1.0 : load.trough_fraction;
  Workload wl = point_workload(cfg, OpMix::SeqRead, 1, 1, 0);
  wl.arrivals = square_wave_arrivals(cfg.seed, peak, trough, load.phase_ns, load.duration_ns);
  if (wl.arrivals.empty()) throw ConfigInvalid("load", "profile produces no arrivals");
  wl.task_count = wl.arrivals.size();

  ScalingTrace out;
  std::ostringstream metrics, timeline, phases;
  metrics << "architecture," << metrics_csv_header() << '\n';
  timeline << "architecture,time_ns,active\n";
  phases << "architecture,phase,start_ns,end_ns,peak,iops\n";
  for (const Architecture arch : {Architecture::StaticPool, Architecture::DynamicPool}) {
    RunConfig rc = run_config(cfg);
    rc.arch = arch;
    rc.scheme = Scheme::Full;
    rc.threads = load.workers;
    rc.instances = k;
    rc.run_id = to_string(arch);
    rc.label = "scaling_trace";
    const MetricsReport rep = run_workload(rc, wl).report;
    metrics << to_string(arch) << ',' << metrics_csv_row(rep) << '\n';
    for (const auto& [t, n] : rep.active_instance_timeline) timeline << to_string(arch) << ',' << t << ',' << n << '\n';
    const auto n_phases = static_cast<std::size_t>((load.duration_ns + load.phase_ns - 1) / load.phase_ns);
    for (std::size_t p = 0; p < n_phases; ++p) {
      const Nanos from = static_cast<Nanos>(p) * load.phase_ns;
      const Nanos to = std::min(from + load.phase_ns, load.duration_ns);
      phases << to_string(arch) << ',' << p << ',' << from << ',' << to << ',' << (load.constant || p % 2 == 0 ? 1 : 0)
             << ',' << fixed(rep.iops_between(from, to), 1) << '\n';
    }
    if (progress) progress(std::string(to_string(arch)) + " poll_busy_ns=" + std::to_string(rep.poll_busy_total()));
  }
  out.metrics_csv = metrics.str();
  out.timeline_csv = timeline.str();
  out.phases_csv = phases.str();
  return out;
}

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string VerifyReport::render() const {
  std::ostringstream os;
  for (const auto& c : checks) os << "check " << c.name << ' ' << (c.pass ? "PASS" : "FAIL") << ' ' << c.detail << '\n';
  os << "result " << (all_pass() ? "PASS" : "FAIL") << ' '
     << std::count_if(checks.begin(), checks.end(), [](const Check& c) { return c.pass; }) << '/' << checks.size()
     << '\n';
  return os.str();
}

VerifyReport cmd_verify(const ExperimentConfig& cfg, const Progress& progress) {
  validate_config(cfg, false);
  VerifyReport rep;
  auto add = [&](std::string name, bool pass, std::string detail) {
    if (progress) progress(name + (pass ? " PASS" : " FAIL"));
    rep.checks.push_back({std::move(name), pass, std::move(detail)});
  };

  const auto ring = ring_config_violations(cfg.api);
  add("ring_config", ring.empty(), ring.empty() ? "sq/cq sizes valid" : ring.front());
  const auto dev = model_violations(cfg.device);
  add("device_model", dev.empty(), dev.empty() ? "device model valid" : dev.front());
  {
    std::string detail;
    const bool ok = spsc_fifo_stress(cfg.verify.spsc_items, cfg.seed, detail);
    add("spsc_fifo", ok, detail);
  }

  const char* run_checks[] = {"exactly_once",       "conservation",     "scheme_equivalence", "spsc_ownership",
                              "shared_nothing_isolation", "dispatch_skip_rule", "callback_placement", "fault_reconciliation",
                              "littles_law",        "determinism"};
  if (!ring.empty() || !dev.empty()) {
    for (const char* name : run_checks) add(name, false, "not run: configuration violates an invariant");
    return rep;
  }

  const auto specs = verify_specs(cfg);
  std::uint64_t io_total = 0;
  for (const auto& s : specs) io_total += make_plan(*s, Scheme::Full).io_count;
  const double io_per_task = std::max(1.0, static_cast<double>(io_total) / static_cast<double>(specs.size()));
  const auto tasks = static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.verify.requests) / io_per_task));

  std::uint64_t runs = 0, not_once = 0, not_conserved = 0, state_mismatch = 0, spsc_bad = 0, sn_cross = 0,
                inactive = 0, placement = 0, requests = 0;
  for (std::uint32_t s = 0; s < cfg.verify.seeds; ++s) {
    for (const Architecture arch : {Architecture::SharedNothing, Architecture::DirectAccess, Architecture::StaticPool,
                                    Architecture::DynamicPool}) {
      for (const Scheme scheme : {Scheme::Full, Scheme::Callback, Scheme::Coroutine}) {
        Workload wl;
        wl.specs = specs;
        wl.task_count = tasks;
        wl.concurrency = 4;
        wl.geometry = geometry_of(cfg);
        RunConfig rc = run_config(cfg);
        rc.arch = arch;
        rc.scheme = scheme;
        rc.threads = 4;
        rc.instances = 2;
        rc.exec_mode = s % 2 == 0 ? ExecMode::InlineCallbacks : ExecMode::IoThreads;
        rc.seed = cfg.seed + s;
        rc.keep_final_states = true;
        rc.run_id = std::string(to_string(arch)) + "-" + to_string(scheme);
        const RunResult r = run_workload(rc, wl);
        ++runs;
        requests += r.requests;
        if (!r.exactly_once) ++not_once;
        if (!r.report.conserved() || r.report.tasks_completed != tasks) ++not_conserved;
        for (std::size_t i = 0; i < tasks; ++i) {
          if (r.final_states[i] != reference_final_state(*wl.spec_ptr(i), i, wl.geometry)) ++state_mismatch;
        }
        if (arch != Architecture::DirectAccess) spsc_bad += r.report.sq_producer_violations + r.report.cq_consumer_violations;
        if (arch == Architecture::SharedNothing) sn_cross += r.report.cross_thread_msgs;
        inactive += r.report.inactive_deliveries;
        placement += r.report.callback_placement_violations;
      }
    }
  }
  const std::string over = " over " + std::to_string(runs) + " runs, " + std::to_string(requests) + " requests";
  add("exactly_once", not_once == 0, std::to_string(not_once) + " runs with lost or duplicated completions" + over);
  add("conservation", not_conserved == 0, std::to_string(not_conserved) + " runs violating conservation" + over);
  add("scheme_equivalence", state_mismatch == 0, std::to_string(state_mismatch) + " task states differ from the reference");
  add("spsc_ownership", spsc_bad == 0, std::to_string(spsc_bad) + " SQ/CQ ownership violations");
  add("shared_nothing_isolation", sn_cross == 0, std::to_string(sn_cross) + " cross-thread messages");
  add("dispatch_skip_rule", inactive == 0, std::to_string(inactive) + " deliveries to inactive instances");
  add("callback_placement", placement == 0, std::to_string(placement) + " continuations off the polling thread");

  {
    Workload wl;
    wl.specs = specs;
    wl.task_count = tasks;
    wl.concurrency = 4;
    wl.geometry = geometry_of(cfg);
    RunConfig rc = run_config(cfg);
    rc.arch = Architecture::SharedNothing;
    rc.scheme = Scheme::Callback;
    rc.threads = 2;
    rc.trace_device = true;
    if (rc.device.fault_rate == 0.0 && rc.device.fault_plan.empty()) rc.device.fault_rate = 0.002;
    const RunResult r = run_workload(rc, wl);
    const std::size_t errors = count_kind(r.device_trace_csv, "error");
    const std::size_t cancels = count_kind(r.device_trace_csv, "cancel");
    const bool ok = errors == r.report.errored && cancels == r.report.canceled && r.report.conserved();
    add("fault_reconciliation", ok,
        "trace errors=" + std::to_string(errors) + " canceled=" + std::to_string(cancels) +
            " report errored=" + std::to_string(r.report.errored) + " canceled=" + std::to_string(r.report.canceled));
  }
  {
    ExperimentConfig c = cfg;
    c.device.jitter = 0.0;
    c.device.fault_plan.clear();
    c.device.fault_rate = 0.0;
    const std::size_t qd = c.device.parallelism;
    const double predicted = little_iops(c, OpMix::SeqRead, qd);
    const auto ops = static_cast<std::uint64_t>(predicted / 10.0);
    RunConfig rc = run_config(c);
    rc.arch = Architecture::SharedNothing;
    rc.scheme = Scheme::Callback;
    rc.threads = 1;
    const RunResult r = run_workload(rc, point_workload(c, OpMix::SeqRead, std::max<std::uint64_t>(ops, 1000), qd, 0));
    const double err = std::abs(r.report.iops() / predicted - 1.0);
    add("littles_law", err <= 0.01, "qd=" + std::to_string(qd) + " iops=" + fixed(r.report.iops(), 1) +
                                        " predicted=" + fixed(predicted, 1) + " error=" + fixed(err * 100, 3) + "%");
  }
  {
    Workload wl;
    wl.specs = specs;
    wl.task_count = std::min<std::size_t>(tasks, 2000);
    wl.concurrency = 4;
    wl.geometry = geometry_of(cfg);
    RunConfig rc = run_config(cfg);
    rc.arch = Architecture::DynamicPool;
    rc.scheme = Scheme::Full;
    rc.threads = 4;
    rc.instances = 2;
    rc.run_id = "determinism";
    const std::string a = metrics_csv_row(run_workload(rc, wl).report);
    const std::string b = metrics_csv_row(run_workload(rc, wl).report);
    add("determinism", a == b, a == b ? "identical rows" : "rows differ");
  }
  return rep;
}

std::string svg_plot(const std::string& csv, const std::string& x_col, const std::string& y_col,
                     const std::string& series_col, const std::string& title, bool log_x) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty CSV");
  const auto header = split(line);
  auto col = [&](const std::string& name) -> std::ptrdiff_t {
    if (name.empty()) return -1;
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("no column " + name);
    return it - header.begin();
  };
  const auto xi = col(x_col), yi = col(y_col), si = col(series_col);

  std::map<std::string, std::map<double, std::pair<double, int>>> series;
  while (std::getline(is, line)) {
    const auto cells = split(line);
    if (cells.size() != header.size()) continue;
    auto& acc = series[si < 0 ? y_col : cells[si]][std::stod(cells[xi])];
    acc.first += std::stod(cells[yi]);
    ++acc.second;
  }

  double x0 = 1e300, x1 = -1e300, y1 = 0;
  auto xt = [&](double x) { return log_x ? std::log2(std::max(x, 1e-9)) : x; };
  for (const auto& [name, pts] : series)
    for (const auto& [x, acc] : pts) {
      x0 = std::min(x0, xt(x));
      x1 = std::max(x1, xt(x));
      y1 = std::max(y1, acc.first / acc.second);
    }
  if (series.empty()) x0 = 0, x1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= 0) y1 = 1;
  y1 *= 1.05;

  const double W = 720, H = 440, L = 80, R = 170, T = 40, B = 60;
  auto px = [&](double x) { return L + (xt(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - y / y1 * (H - T - B); };
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y1 * i / 5;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fixed(y, 0) << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(y) << "\" x2=\"" << W - R << "\" y2=\"" << py(y)
       << "\" stroke=\"#ddd\"/>\n";
  }
  std::map<double, bool> xs;
  for (const auto& [name, pts] : series)
    for (const auto& [x, acc] : pts) xs[x] = true;
  for (const auto& [x, unused] : xs) {
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << fixed(x, 0) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << x_col << "</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\">" << y_col << "</text>\n";
  std::size_t k = 0;
  for (const auto& [name, pts] : series) {
    const char* color = palette[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, acc] : pts) os << px(x) << ',' << py(acc.first / acc.second) << ' ';
    os << "\"/>\n";
    for (const auto& [x, acc] : pts) {
      os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(acc.first / acc.second) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    const double ly = T + 10 + 18 * static_cast<double>(k);
    os << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << W - R + 30 << "\" y=\"" << ly - 3 << "\">" << name << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ringbench
