#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "executor.hpp"
#include "ring_core.hpp"
#include "sim_device.hpp"

namespace ringrt {

enum class ClockMode : std::uint8_t { Virtual, Wall };

inline const char* to_string(ClockMode m) noexcept { return m == ClockMode::Virtual ? "virtual" : "wall"; }

// A simulated device plus the executor that runs everything around it.
//
// Virtual: the device shares the executor's calendar and doorbells schedule
// consumers. Wall: the device keeps a private clock advanced to wall time by a
// dedicated engine thread, which is then its only SQ consumer and CQ producer.
class SimPlatform {
 public:
  SimPlatform(DeviceModel model, std::uint64_t seed, ClockMode mode, bool spin_compute = false) : mode_(mode) {
    if (mode == ClockMode::Virtual) {
      virt_ = std::make_unique<VirtualExecutor>();
      device_ = std::make_unique<SimDevice>(std::move(model), seed, &virt_->clock());
    } else {
      wall_ = std::make_unique<WallExecutor>(spin_compute);
      device_ = std::make_unique<SimDevice>(std::move(model), seed);
      engine_ = std::make_unique<Engine>(*this);
      wall_->add(engine_.get());
    }
  }

  SimPlatform(const SimPlatform&) = delete;
  SimPlatform& operator=(const SimPlatform&) = delete;
  ~SimPlatform() { stop(); }

  ClockMode mode() const noexcept { return mode_; }
  Executor& exec() noexcept { return virt_ ? static_cast<Executor&>(*virt_) : static_cast<Executor&>(*wall_); }
  VirtualExecutor* virtual_executor() noexcept { return virt_.get(); }
  SimDevice& device() noexcept { return *device_; }
  Nanos now() const { return virt_ ? virt_->now() : wall_->now(); }

  ActorId add_actor(Actor* a) { return virt_ ? virt_->add(a) : wall_->add(a); }

  ApiInstance& add_instance(ApiConfig cfg) {
    cfg.capacity_bytes = device_->model().capacity_bytes;
    cfg.block_size = device_->model().block_size;
    instances_.push_back(std::make_unique<ApiInstance>(cfg));
    device_->attach(*instances_.back());
    return *instances_.back();
  }

  // Wakes `actors` whenever the device posts to `api`'s CQ (virtual time only;
  // wall-clock consumers poll).
  void on_completion(ApiInstance& api, std::vector<ActorId> actors) {
    if (!virt_) return;
    bells_.push_back(std::make_unique<WakeBell>(*virt_, std::move(actors)));
    api.set_cq_doorbell(bells_.back().get());
  }

  void start() {
    if (wall_) wall_->start();
  }
  void stop() {
    if (wall_) wall_->stop();
  }

  // Runs until done() holds. Virtual: fires events (false if the calendar
  // empties or passes `deadline`). Wall: waits, with `deadline` measured from
  // the executor's start.
  template <typename Pred>
  bool run_until(Pred done, Nanos deadline = kNever) {
    if (virt_) return virt_->run_while_not(done, deadline);
    while (!done()) {
      if (wall_->now() > deadline) return false;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    return true;
  }

 private:
  struct WakeBell final : Notifier {
    WakeBell(Executor& e, std::vector<ActorId> a) : exec(e), actors(std::move(a)) {}
    void notify() override {
      for (auto id : actors) exec.wake(id);
    }
    Executor& exec;
    std::vector<ActorId> actors;
  };

  struct Engine final : Actor {
    explicit Engine(SimPlatform& p) : platform(p) {}
    std::optional<Nanos> begin(Nanos now) override {
      platform.device_->run_until(now);
      if (platform.device_->idle()) return std::nullopt;
      return 0;
    }
    void end(Nanos) override {}
    SimPlatform& platform;
  };

  ClockMode mode_;
  std::unique_ptr<VirtualExecutor> virt_;
  std::unique_ptr<WallExecutor> wall_;
  std::unique_ptr<SimDevice> device_;
  std::unique_ptr<Engine> engine_;
  std::deque<std::unique_ptr<ApiInstance>> instances_;
  std::vector<std::unique_ptr<WakeBell>> bells_;
};

}  // namespace ringrt
