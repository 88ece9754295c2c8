#include <gtest/gtest.h>

#include "bench/config.hpp"

#include <cstdio>
#include <fstream>

using namespace ringbench;

namespace {

std::string invalid_path(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigInvalid& e) {
    return e.path();
  }
  return "<accepted>";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig def;
  EXPECT_EQ(parse_config(dump_config(def)), def);
  EXPECT_EQ(parse_config("{}"), def);
  EXPECT_NO_THROW(validate_config(def));
}

TEST(Config, NonDefaultRoundTrip) {
  ExperimentConfig c;
  c.backend = BackendKind::Native;
  c.device.parallelism = 7;
  c.device.fault_plan = {{3, 5}, {11, 28}};
  c.device.fault_rate = 0.25;
  c.api.sq_entries = 16;
  c.api.cq_entries = 64;
  c.api.sq_poll = true;
  c.architecture.kind = ringrt::Architecture::DynamicPool;
  c.architecture.policy = ringrt::DispatchPolicy::LeastLoaded;
  c.architecture.threading = ringrt::InstanceThreading::SubmitReapPair;
  c.architecture.scaling.target_inflight_per_instance = 3.5;
  c.scheme = ringrt::Scheme::Coroutine;
  c.workload.op_kind = OpMix::WriteMix;
  c.workload.corpus_path = "x.jsonl";
  c.qd_list = {3, 9};
  c.callback.cost_list_ns = {5};
  c.load.constant = true;
  c.clock = ringrt::ClockMode::Wall;
  c.native.path = "/tmp/f";
  EXPECT_EQ(parse_config(dump_config(c)), c);
}

TEST(Config, UnknownFieldNamesPath) {
  EXPECT_EQ(invalid_path(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(invalid_path(R"({"device": {"paralelism": 4}})"), "device.paralelism");
  EXPECT_EQ(invalid_path(R"({"architecture": {"scaling": {"x": 1}}})"), "architecture.scaling.x");
}

TEST(Config, WrongTypesRejected) {
  EXPECT_EQ(invalid_path(R"({"runs": "ten"})"), "runs");
  EXPECT_EQ(invalid_path(R"({"runs": -1})"), "runs");
  EXPECT_EQ(invalid_path(R"({"preconditioning": 1})"), "preconditioning");
  EXPECT_EQ(invalid_path(R"({"scheme": "greedy"})"), "scheme");
  EXPECT_EQ(invalid_path(R"({"device": 3})"), "device");
  EXPECT_EQ(invalid_path(R"({"qd_list": [1, -2]})"), "qd_list[1]");
  EXPECT_EQ(invalid_path("{not json"), "<root>");
  EXPECT_EQ(invalid_path("[]"), "<root>");
}

TEST(Config, ValidationCatchesImpossibleRuns) {
  ExperimentConfig c;
  c.api.cq_entries = c.api.sq_entries / 2;
  EXPECT_THROW(validate_config(c), ConfigInvalid);
  EXPECT_NO_THROW(validate_config(c, false));

  auto path_of = [](ExperimentConfig bad) {
    try {
      validate_config(bad);
    } catch (const ConfigInvalid& e) {
      return e.path();
    }
    return std::string("<accepted>");
  };
  ExperimentConfig d;
  d.architecture.threads = 0;
  EXPECT_EQ(path_of(d), "architecture.threads");
  d = {};
  d.qd_list = {4, 0};
  EXPECT_EQ(path_of(d), "qd_list[1]");
  d = {};
  d.workload.block_size = 1000;
  EXPECT_EQ(path_of(d), "workload.block_size");
  d = {};
  d.device.jitter = 1.5;
  EXPECT_EQ(path_of(d), "device");
  d = {};
  d.architecture.inbox_capacity = 1000;
  EXPECT_EQ(path_of(d), "architecture.inbox_capacity");
}

TEST(Config, LoadFromFile) {
  const std::string path = ::testing::TempDir() + "ringbench_cfg.json";
  {
    std::ofstream f(path);
    f << R"({"seed": 99, "runs": 2})";
  }
  const auto c = load_config(path);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.runs, 2u);
  std::remove(path.c_str());
  EXPECT_THROW(load_config(path), ConfigInvalid);
}

TEST(Config, RunConfigCarriesSettings) {
  ExperimentConfig c;
  c.architecture.kind = ringrt::Architecture::StaticPool;
  c.architecture.instances = 3;
  c.seed = 42;
  const auto rc = run_config(c);
  EXPECT_EQ(rc.arch, ringrt::Architecture::StaticPool);
  EXPECT_EQ(rc.instances, 3u);
  EXPECT_EQ(rc.seed, 42u);
  EXPECT_EQ(rc.device, c.device);
}
