#pragma once

#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "partition.hpp"

namespace ringrt {

struct CorpusOptions {
  std::size_t max_steps = 16;  // counted after flattening nested calls
  double io_probability = 0.4;
  double call_probability = 0.05;
  std::size_t state_bytes = 32;
  Nanos max_compute_cost = 2 * kMicro;
  bool allow_writes = true;
};

namespace detail {

inline std::size_t flat_step_count(const TaskSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : spec.steps) n += std::holds_alternative<CallStep>(s) ? flat_step_count(*std::get<CallStep>(s).sub) : 1;
  return n;
}

inline TaskSpec random_spec(SplitMix& rng, TaskId id, std::size_t budget, const CorpusOptions& opt, int depth) {
  TaskSpec spec;
  spec.task_id = id;
  const std::size_t n = 1 + rng.below(budget);
  std::size_t used = 0;
  while (used < n) {
    const double roll = rng.unit();
    if (depth == 0 && roll < opt.call_probability && n - used >= 2) {
      const std::size_t sub_budget = std::min<std::size_t>(4, n - used);
      auto sub = std::make_shared<TaskSpec>(random_spec(rng, id, sub_budget, opt, depth + 1));
      used += flat_step_count(*sub);
      spec.steps.emplace_back(CallStep{std::move(sub)});
    } else if (roll < opt.call_probability + opt.io_probability) {
      IoStep io;
      const auto k = rng.below(opt.allow_writes ? 10 : 8);
      io.op = k < 6 ? OpKind::Read : k < 8 ? OpKind::Nop : k < 9 ? OpKind::Write : OpKind::Fsync;
      io.blocks = 1 + static_cast<std::uint32_t>(rng.below(4));
      io.offset_mode = rng.below(4) == 0 ? OffsetMode::Sequential : OffsetMode::FromState;
      spec.steps.emplace_back(io);
      ++used;
    } else {
      spec.steps.emplace_back(ComputeStep{static_cast<Nanos>(rng.below(static_cast<std::uint64_t>(opt.max_compute_cost) + 1)),
                                          rng.next()});
      ++used;
    }
  }
  if (depth == 0) {
    spec.initial_state.resize(opt.state_bytes);
    for (auto& b : spec.initial_state) b = static_cast<std::uint8_t>(rng.next());
  }
  return spec;
}

}  // namespace detail

// Seeded random TaskSpec corpus. Identical (seed, count, options) always
// yields the same specs.
inline std::vector<TaskSpec> generate_corpus(std::uint64_t seed, std::size_t count, const CorpusOptions& opt = {}) {
  if (opt.max_steps == 0) throw std::invalid_argument("max_steps must be >= 1");
  SplitMix rng(mix64(seed));
  std::vector<TaskSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(detail::random_spec(rng, i, opt.max_steps, opt, 0));
  return out;
}

// -- structured text (one JSON object per line) ---------------------------------

inline nlohmann::json to_json(const TaskSpec& spec);

inline nlohmann::json step_to_json(const Step& step) {
  using nlohmann::json;
  if (const auto* c = std::get_if<ComputeStep>(&step)) return json{{"compute", {{"cost_ns", c->cost_ns}, {"key", c->key}}}};
  if (const auto* io = std::get_if<IoStep>(&step)) {
    const char* mode = io->offset_mode == OffsetMode::FromState ? "state"
                       : io->offset_mode == OffsetMode::Sequential ? "sequential"
                                                                   : "fixed";
    return json{{"io", {{"op", to_string(io->op)}, {"blocks", io->blocks}, {"offset", mode}, {"fixed_offset", io->fixed_offset}}}};
  }
  return json{{"call", to_json(*std::get<CallStep>(step).sub)}};
}

inline nlohmann::json to_json(const TaskSpec& spec) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : spec.steps) steps.push_back(step_to_json(s));
  return {{"task_id", spec.task_id}, {"state", spec.initial_state}, {"steps", std::move(steps)}};
}

inline OpKind parse_op(const std::string& s) {
  if (s == "read") return OpKind::Read;
  if (s == "write") return OpKind::Write;
  if (s == "fsync") return OpKind::Fsync;
  if (s == "nop") return OpKind::Nop;
  throw std::invalid_argument("unknown op: " + s);
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec spec;
  spec.task_id = j.at("task_id").get<TaskId>();
  spec.initial_state = j.value("state", TaskState{});
  for (const auto& s : j.at("steps")) {
    if (s.contains("compute")) {
      const auto& c = s["compute"];
      spec.steps.emplace_back(ComputeStep{c.at("cost_ns").get<Nanos>(), c.at("key").get<std::uint64_t>()});
    } else if (s.contains("io")) {
      const auto& io = s["io"];
      IoStep step;
      step.op = parse_op(io.at("op").get<std::string>());
      step.blocks = io.at("blocks").get<std::uint32_t>();
      const auto mode = io.at("offset").get<std::string>();
      step.offset_mode = mode == "state" ? OffsetMode::FromState
                         : mode == "sequential" ? OffsetMode::Sequential
                         : mode == "fixed" ? OffsetMode::Fixed
                                           : throw std::invalid_argument("unknown offset mode: " + mode);
      step.fixed_offset = io.value("fixed_offset", std::uint64_t{0});
      spec.steps.emplace_back(step);
    } else if (s.contains("call")) {
      spec.steps.emplace_back(CallStep{std::make_shared<TaskSpec>(task_from_json(s["call"]))});
    } else {
      throw std::invalid_argument("step has no compute/io/call member");
    }
  }
  return spec;
}

inline void write_corpus(std::ostream& os, const std::vector<TaskSpec>& specs) {
  for (const auto& s : specs) os << to_json(s).dump() << '\n';
}

inline std::vector<TaskSpec> read_corpus(std::istream& is) {
  std::vector<TaskSpec> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(task_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace ringrt
