#include "bench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace ringbench {

using nlohmann::json;
using nlohmann::ordered_json;
using namespace ringrt;

const char* to_string(BackendKind b) noexcept { return b == BackendKind::Sim ? "sim" : "native"; }

const char* to_string(OpMix m) noexcept {
  switch (m) {
    case OpMix::SeqRead: return "seq_read";
    case OpMix::RandRead: return "rand_read";
    case OpMix::WriteMix: return "write_mix";
  }
  return "?";
}

namespace {

template <typename E>
struct EnumTable {
  std::vector<std::pair<const char*, E>> entries;

  E parse(const std::string& path, const std::string& s) const {
    for (const auto& [name, v] : entries)
      if (s == name) return v;
    std::string expected;
    for (const auto& [name, v] : entries) expected += (expected.empty() ? "" : ", ") + std::string(name);
    throw ConfigInvalid(path, "unknown value '" + s + "' (expected one of: " + expected + ")");
  }
};

const EnumTable<BackendKind> kBackends{{{"sim", BackendKind::Sim}, {"native", BackendKind::Native}}};
const EnumTable<OpMix> kMixes{{{"seq_read", OpMix::SeqRead}, {"rand_read", OpMix::RandRead}, {"write_mix", OpMix::WriteMix}}};
const EnumTable<Architecture> kArchs{{{"shared_nothing", Architecture::SharedNothing},
                                      {"direct_access", Architecture::DirectAccess},
                                      {"static_pool", Architecture::StaticPool},
                                      {"dynamic_pool", Architecture::DynamicPool}}};
const EnumTable<Scheme> kSchemes{{{"full", Scheme::Full}, {"callback", Scheme::Callback}, {"coroutine", Scheme::Coroutine}}};
const EnumTable<ExecMode> kModes{{{"io_threads", ExecMode::IoThreads}, {"inline_callbacks", ExecMode::InlineCallbacks}}};
const EnumTable<InstanceThreading> kThreading{
    {{"single_thread", InstanceThreading::SingleThread}, {"submit_reap_pair", InstanceThreading::SubmitReapPair}}};
const EnumTable<DispatchPolicy> kPolicies{
    {{"round_robin", DispatchPolicy::RoundRobin}, {"least_loaded", DispatchPolicy::LeastLoaded}}};
const EnumTable<ClockMode> kClocks{{{"virtual", ClockMode::Virtual}, {"wall", ClockMode::Wall}}};

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown fields.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigInvalid(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void integer(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigInvalid(at(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v->is_number_unsigned() || v->get<std::int64_t>() >= 0) {
          out = static_cast<T>(v->get<std::uint64_t>());
          return;
        }
        throw ConfigInvalid(at(key), "expected a non-negative integer");
      } else {
        out = static_cast<T>(v->get<std::int64_t>());
      }
    }
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigInvalid(at(key), "expected a number");
      out = v->get<double>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigInvalid(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigInvalid(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename E>
  void enumeration(const std::string& key, const EnumTable<E>& table, E& out) {
    std::string s;
    string(key, s);
    if (!s.empty() || j_.contains(key)) out = table.parse(at(key), s);
  }

  template <typename T>
  void integer_list(const std::string& key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigInvalid(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        const std::string p = at(key) + "[" + std::to_string(i) + "]";
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0) throw ConfigInvalid(p, "expected a non-negative integer");
        out.push_back(static_cast<T>(e.get<std::int64_t>()));
      }
    }
  }

  // Calls fn(Reader&) on a nested object if present.
  template <typename Fn>
  void object(const std::string& key, Fn fn) {
    if (const json* v = find(key)) {
      Reader r(*v, at(key));
      fn(r);
      r.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigInvalid(at(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ordered_json device_json(const DeviceModel& d) {
  ordered_json plan = ordered_json::object();
  for (const auto& [id, err] : d.fault_plan) plan[std::to_string(id)] = err;
  return {{"service_time_ns", d.service_time},
          {"jitter", d.jitter},
          {"parallelism", d.parallelism},
          {"capacity_bytes", d.capacity_bytes},
          {"block_size", d.block_size},
          {"submission_cpu_cost_ns", d.submission_cpu_cost},
          {"wakeup_cost_ns", d.wakeup_cost},
          {"random_read_multiplier", d.random_read_multiplier},
          {"fault_rate", d.fault_rate},
          {"fault_plan", plan}};
}

void read_device(Reader& r, DeviceModel& d) {
  r.integer("service_time_ns", d.service_time);
  r.number("jitter", d.jitter);
  r.integer("parallelism", d.parallelism);
  r.integer("capacity_bytes", d.capacity_bytes);
  r.integer("block_size", d.block_size);
  r.integer("submission_cpu_cost_ns", d.submission_cpu_cost);
  r.integer("wakeup_cost_ns", d.wakeup_cost);
  r.number("random_read_multiplier", d.random_read_multiplier);
  r.number("fault_rate", d.fault_rate);
  if (const json* plan = r.find("fault_plan")) {
    if (!plan->is_object()) throw ConfigInvalid(r.at("fault_plan"), "expected an object of request id -> errno");
    d.fault_plan.clear();
    for (auto it = plan->begin(); it != plan->end(); ++it) {
      const std::string p = r.at("fault_plan") + "." + it.key();
      RequestId id = 0;
      try {
        std::size_t used = 0;
        id = std::stoull(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigInvalid(p, "request id must be a decimal integer");
      }
      if (!it->is_number_integer()) throw ConfigInvalid(p, "expected an integer errno");
      d.fault_plan[id] = it->get<std::int32_t>();
    }
  }
}

ordered_json scaling_json(const ScalingConfig& s) {
  return {{"window_ns", s.window},
          {"target_inflight_per_instance", s.target_inflight_per_instance},
          {"min_active", s.min_active},
          {"samples_per_window", s.samples_per_window}};
}

void read_scaling(Reader& r, ScalingConfig& s) {
  r.integer("window_ns", s.window);
  r.number("target_inflight_per_instance", s.target_inflight_per_instance);
  r.integer("min_active", s.min_active);
  r.integer("samples_per_window", s.samples_per_window);
}

}  // namespace

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["backend"] = to_string(c.backend);
  j["device"] = device_json(c.device);
  j["native"] = {{"path", c.native.path},
                 {"direct_io", c.native.direct_io},
                 {"sq_poll", c.native.sq_poll},
                 {"io_poll", c.native.io_poll},
                 {"ring_entries", c.native.ring_entries},
                 {"logical_block", c.native.logical_block}};
  j["api"] = {{"sq_entries", c.api.sq_entries},
              {"cq_entries", c.api.cq_entries},
              {"sq_poll", c.api.sq_poll},
              {"sq_poll_idle_timeout_ns", c.api.sq_poll_idle_timeout}};
  j["costs"] = {{"tasklet_overhead_ns", c.costs.tasklet_overhead}, {"submit_ns", c.costs.submit},
                {"reap_ns", c.costs.reap},
                {"dispatch_ns", c.costs.dispatch},
                {"handle_poll_ns", c.costs.handle_poll},
                {"lock_ns", c.costs.lock},
                {"resume_base_ns", c.costs.resume_base},
                {"frame_byte_cost_per_64_ns", c.costs.frame_byte_cost_per_64}};
  const ArchitectureConfig& a = c.architecture;
  j["architecture"] = {{"kind", to_string(a.kind)},
                       {"threads", a.threads},
                       {"instances", a.instances},
                       {"threading", to_string(a.threading)},
                       {"policy", to_string(a.policy)},
                       {"exec_mode", to_string(a.exec_mode)},
                       {"inbox_capacity", a.inbox_capacity},
                       {"batch", a.batch},
                       {"scaling", scaling_json(a.scaling)}};
  j["scheme"] = to_string(c.scheme);
  const WorkloadConfig& w = c.workload;
  j["workload"] = {{"op_count", w.op_count},
                   {"op_kind", to_string(w.op_kind)},
                   {"write_fraction", w.write_fraction},
                   {"block_size", w.block_size},
                   {"queue_depth", w.queue_depth},
                   {"callback_cost_ns", w.callback_cost_ns},
                   {"min_duration_ns", w.min_duration_ns},
                   {"corpus_path", w.corpus_path}};
  j["qd_list"] = c.qd_list;
  j["callback"] = {{"cost_list_ns", c.callback.cost_list_ns},
                   {"workers", c.callback.workers},
                   {"instances", c.callback.instances},
                   {"tasks_per_worker", c.callback.tasks_per_worker},
                   {"op_count", c.callback.op_count}};
  j["load"] = {{"peak_per_s", c.load.peak_per_s},
               {"trough_fraction", c.load.trough_fraction},
               {"phase_ns", c.load.phase_ns},
               {"duration_ns", c.load.duration_ns},
               {"workers", c.load.workers},
               {"constant", c.load.constant}};
  j["verify"] = {{"requests", c.verify.requests},
                 {"seeds", c.verify.seeds},
                 {"spsc_items", c.verify.spsc_items},
                 {"corpus_tasks", c.verify.corpus_tasks}};
  j["runs"] = c.runs;
  j["preconditioning"] = c.preconditioning;
  j["seed"] = c.seed;
  j["clock"] = to_string(c.clock);
  j["spin_compute"] = c.spin_compute;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.enumeration("backend", kBackends, c.backend);
  r.object("device", [&](Reader& d) { read_device(d, c.device); });
  r.object("native", [&](Reader& n) {
    n.string("path", c.native.path);
    n.boolean("direct_io", c.native.direct_io);
    n.boolean("sq_poll", c.native.sq_poll);
    n.boolean("io_poll", c.native.io_poll);
    n.integer("ring_entries", c.native.ring_entries);
    n.integer("logical_block", c.native.logical_block);
  });
  r.object("api", [&](Reader& a) {
    a.integer("sq_entries", c.api.sq_entries);
    a.integer("cq_entries", c.api.cq_entries);
    a.boolean("sq_poll", c.api.sq_poll);
    a.integer("sq_poll_idle_timeout_ns", c.api.sq_poll_idle_timeout);
  });
  r.object("costs", [&](Reader& k) {
    k.integer("tasklet_overhead_ns", c.costs.tasklet_overhead);
    k.integer("submit_ns", c.costs.submit);
    k.integer("reap_ns", c.costs.reap);
    k.integer("dispatch_ns", c.costs.dispatch);
    k.integer("handle_poll_ns", c.costs.handle_poll);
    k.integer("lock_ns", c.costs.lock);
    k.integer("resume_base_ns", c.costs.resume_base);
    k.integer("frame_byte_cost_per_64_ns", c.costs.frame_byte_cost_per_64);
  });
  r.object("architecture", [&](Reader& a) {
    ArchitectureConfig& x = c.architecture;
    a.enumeration("kind", kArchs, x.kind);
    a.integer("threads", x.threads);
    a.integer("instances", x.instances);
    a.enumeration("threading", kThreading, x.threading);
    a.enumeration("policy", kPolicies, x.policy);
    a.enumeration("exec_mode", kModes, x.exec_mode);
    a.integer("inbox_capacity", x.inbox_capacity);
    a.integer("batch", x.batch);
    a.object("scaling", [&](Reader& s) { read_scaling(s, x.scaling); });
  });
  r.enumeration("scheme", kSchemes, c.scheme);
  r.object("workload", [&](Reader& w) {
    WorkloadConfig& x = c.workload;
    w.integer("op_count", x.op_count);
    w.enumeration("op_kind", kMixes, x.op_kind);
    w.number("write_fraction", x.write_fraction);
    w.integer("block_size", x.block_size);
    w.integer("queue_depth", x.queue_depth);
    w.integer("callback_cost_ns", x.callback_cost_ns);
    w.integer("min_duration_ns", x.min_duration_ns);
    w.string("corpus_path", x.corpus_path);
  });
  r.integer_list("qd_list", c.qd_list);
  r.object("callback", [&](Reader& s) {
    s.integer_list("cost_list_ns", c.callback.cost_list_ns);
    s.integer("workers", c.callback.workers);
    s.integer("instances", c.callback.instances);
    s.integer("tasks_per_worker", c.callback.tasks_per_worker);
    s.integer("op_count", c.callback.op_count);
  });
  r.object("load", [&](Reader& l) {
    l.number("peak_per_s", c.load.peak_per_s);
    l.number("trough_fraction", c.load.trough_fraction);
    l.integer("phase_ns", c.load.phase_ns);
    l.integer("duration_ns", c.load.duration_ns);
    l.integer("workers", c.load.workers);
    l.boolean("constant", c.load.constant);
  });
  r.object("verify", [&](Reader& v) {
    v.integer("requests", c.verify.requests);
    v.integer("seeds", c.verify.seeds);
    v.integer("spsc_items", c.verify.spsc_items);
    v.integer("corpus_tasks", c.verify.corpus_tasks);
  });
  r.integer("runs", c.runs);
  r.boolean("preconditioning", c.preconditioning);
  r.integer("seed", c.seed);
  r.enumeration("clock", kClocks, c.clock);
  r.boolean("spin_compute", c.spin_compute);
  r.finish();
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("<root>", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("<file>", "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void validate_config(const ExperimentConfig& c, bool ring_invariants) {
  for (const auto& v : model_violations(c.device)) throw ConfigInvalid("device", v);
  if (ring_invariants) {
    for (const auto& v : ring_config_violations(c.api)) throw ConfigInvalid("api", v);
  }
  const ArchitectureConfig& a = c.architecture;
  if (a.threads == 0) throw ConfigInvalid("architecture.threads", "must be >= 1");
  if (a.instances == 0) throw ConfigInvalid("architecture.instances", "must be >= 1");
  if (a.batch == 0) throw ConfigInvalid("architecture.batch", "must be >= 1");
  if (a.inbox_capacity < 2 || (a.inbox_capacity & (a.inbox_capacity - 1)) != 0) {
    throw ConfigInvalid("architecture.inbox_capacity", "must be a power of two >= 2");
  }
  if (a.scaling.window <= 0) throw ConfigInvalid("architecture.scaling.window_ns", "must be positive");
  if (a.scaling.samples_per_window == 0) throw ConfigInvalid("architecture.scaling.samples_per_window", "must be >= 1");
  if (a.scaling.min_active == 0 || a.scaling.min_active > a.instances) {
    throw ConfigInvalid("architecture.scaling.min_active", "must be in [1, instances]");
  }
  if (a.scaling.target_inflight_per_instance < 0) {
    throw ConfigInvalid("architecture.scaling.target_inflight_per_instance", "must be >= 0");
  }
  const WorkloadConfig& w = c.workload;
  if (w.op_count == 0) throw ConfigInvalid("workload.op_count", "must be >= 1");
  if (w.block_size == 0 || w.block_size % c.device.block_size != 0) {
    throw ConfigInvalid("workload.block_size", "must be a positive multiple of device.block_size");
  }
  if (w.block_size > c.device.capacity_bytes) throw ConfigInvalid("workload.block_size", "larger than the device");
  if (w.write_fraction < 0.0 || w.write_fraction > 1.0) throw ConfigInvalid("workload.write_fraction", "must be in [0, 1]");
  if (w.queue_depth == 0) throw ConfigInvalid("workload.queue_depth", "must be >= 1");
  if (w.callback_cost_ns < 0) throw ConfigInvalid("workload.callback_cost_ns", "must be >= 0");
  if (w.min_duration_ns < 0) throw ConfigInvalid("workload.min_duration_ns", "must be >= 0");
  if (c.qd_list.empty()) throw ConfigInvalid("qd_list", "must not be empty");
  for (std::size_t i = 0; i < c.qd_list.size(); ++i) {
    if (c.qd_list[i] == 0) throw ConfigInvalid("qd_list[" + std::to_string(i) + "]", "must be >= 1");
  }
  if (c.callback.cost_list_ns.empty()) throw ConfigInvalid("callback.cost_list_ns", "must not be empty");
  if (c.callback.workers == 0) throw ConfigInvalid("callback.workers", "must be >= 1");
  if (c.callback.instances == 0) throw ConfigInvalid("callback.instances", "must be >= 1");
  if (c.callback.tasks_per_worker == 0) throw ConfigInvalid("callback.tasks_per_worker", "must be >= 1");
  if (c.callback.op_count == 0) throw ConfigInvalid("callback.op_count", "must be >= 1");
  if (c.load.peak_per_s < 0) throw ConfigInvalid("load.peak_per_s", "must be >= 0");
  if (c.load.trough_fraction <= 0 || c.load.trough_fraction > 1) {
    throw ConfigInvalid("load.trough_fraction", "must be in (0, 1]");
  }
  if (c.load.phase_ns <= 0) throw ConfigInvalid("load.phase_ns", "must be positive");
  if (c.load.duration_ns <= 0) throw ConfigInvalid("load.duration_ns", "must be positive");
  if (c.load.workers == 0) throw ConfigInvalid("load.workers", "must be >= 1");
  if (c.verify.seeds == 0) throw ConfigInvalid("verify.seeds", "must be >= 1");
  if (c.verify.requests == 0) throw ConfigInvalid("verify.requests", "must be >= 1");
  if (c.verify.corpus_tasks == 0) throw ConfigInvalid("verify.corpus_tasks", "must be >= 1");
  if (c.runs == 0) throw ConfigInvalid("runs", "must be >= 1");
  if (c.backend == BackendKind::Native && c.native.path.empty()) {
    throw ConfigInvalid("native.path", "required for the native backend");
  }
}

RunConfig run_config(const ExperimentConfig& c) {
  RunConfig r;
  const ArchitectureConfig& a = c.architecture;
  r.arch = a.kind;
  r.scheme = c.scheme;
  r.exec_mode = a.exec_mode;
  r.threads = a.threads;
  r.instances = a.instances;
  r.threading = a.threading;
  r.policy = a.policy;
  r.inbox_capacity = a.inbox_capacity;
  r.batch = a.batch;
  r.scaling = a.scaling;
  r.api = c.api;
  r.device = c.device;
  r.costs = c.costs;
  r.clock = c.clock;
  r.spin_compute = c.spin_compute;
  r.seed = c.seed;
  return r;
}

}  // namespace ringbench
