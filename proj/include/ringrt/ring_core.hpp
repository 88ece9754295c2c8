#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsc_ring.hpp"
#include "types.hpp"

namespace ringrt {

enum class OpKind : std::uint8_t { Read, Write, Fsync, Nop };

inline const char* to_string(OpKind op) noexcept {
  switch (op) {
    case OpKind::Read: return "read";
    case OpKind::Write: return "write";
    case OpKind::Fsync: return "fsync";
    case OpKind::Nop: return "nop";
  }
  return "?";
}

struct IoRequest {
  RequestId request_id = 0;  // assigned by the ApiInstance on push
  OpKind op = OpKind::Nop;
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
  std::uint32_t buffer_id = 0;
  bool link = false;  // ordered link to the next request in the same submission
  std::uint64_t user_data = 0;
  Nanos submit_time = 0;  // stamped on push, echoed in the completion

  bool operator==(const IoRequest&) const = default;
};

enum class CompletionStatus : std::uint8_t { Ok, Error, Canceled };

struct Completion {
  RequestId request_id = 0;
  std::uint64_t user_data = 0;
  CompletionStatus status = CompletionStatus::Ok;
  std::int32_t error_code = 0;
  std::uint32_t bytes = 0;  // bytes transferred when Ok
  Nanos submit_time = 0;
  Nanos complete_time = 0;

  bool ok() const noexcept { return status == CompletionStatus::Ok; }
  bool operator==(const Completion&) const = default;
};

// Routine backpressure signal, not an error.
enum class PushStatus : std::uint8_t { Accepted, QueueFull };

struct PushResult {
  PushStatus status = PushStatus::QueueFull;
  RequestId first_id = 0;
  bool accepted() const noexcept { return status == PushStatus::Accepted; }
};

struct Depth {
  std::size_t sq_depth = 0;
  std::size_t cq_depth = 0;
  std::size_t inflight = 0;  // accepted but not yet posted by the device
  bool operator==(const Depth&) const = default;
};

class InvalidRequest : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Wake-up hook. Under the virtual-time executor this schedules the consumer;
// under real threads it is left unset and consumers poll.
class Notifier {
 public:
  virtual ~Notifier() = default;
  virtual void notify() = 0;
};

struct ApiConfig {
  std::size_t sq_entries = 256;
  std::size_t cq_entries = 512;
  bool sq_poll = true;
  Nanos sq_poll_idle_timeout = kMilli;
  std::uint64_t capacity_bytes = std::uint64_t{1} << 30;
  std::uint32_t block_size = kDefaultBlockSize;

  bool operator==(const ApiConfig&) const = default;
};

// Returns one message per violated structural invariant; empty when valid.
inline std::vector<std::string> ring_config_violations(const ApiConfig& cfg) {
  std::vector<std::string> out;
  if (!is_power_of_two(cfg.sq_entries)) out.emplace_back("sq_entries must be a power of two");
  if (!is_power_of_two(cfg.cq_entries)) out.emplace_back("cq_entries must be a power of two");
  if (cfg.cq_entries < cfg.sq_entries) out.emplace_back("cq_entries must be >= sq_entries");
  if (cfg.block_size == 0) out.emplace_back("block_size must be positive");
  if (cfg.capacity_bytes < cfg.block_size) out.emplace_back("capacity_bytes must hold at least one block");
  if (cfg.sq_poll_idle_timeout <= 0) out.emplace_back("sq_poll_idle_timeout must be positive");
  return out;
}

inline void validate_request(const IoRequest& req, std::uint64_t capacity_bytes, std::uint32_t block_size) {
  switch (req.op) {
    case OpKind::Read:
    case OpKind::Write:
      if (req.length == 0 || req.length % block_size != 0) {
        throw InvalidRequest("read/write length must be a positive multiple of the block size");
      }
      if (req.offset % block_size != 0) throw InvalidRequest("offset must be block aligned");
      if (req.offset + req.length > capacity_bytes) throw InvalidRequest("request exceeds device capacity");
      break;
    case OpKind::Fsync:
    case OpKind::Nop:
      if (req.length != 0) throw InvalidRequest("fsync/nop must have zero length");
      break;
  }
}

// One submission queue plus one completion queue.
//
// User side: sq_push / submit_linked (single producer) and cq_reap (single
// consumer). Device side: sq_* consumption and cq_post. Request ids come from a
// per-instance monotonically increasing counter (the SQ tail).
//
// A push is refused unless every accepted-but-unreaped request would still fit
// in the CQ, so the device can never overflow it.
class ApiInstance {
 public:
  explicit ApiInstance(ApiConfig cfg = {}) : cfg_(cfg), sq_(checked(cfg).sq_entries), cq_(cfg.cq_entries) {}

  const ApiConfig& config() const noexcept { return cfg_; }
  InstanceId id() const noexcept { return id_; }
  void set_id(InstanceId id) noexcept { id_ = id; }

  void set_sq_doorbell(Notifier* n) noexcept { sq_doorbell_ = n; }
  void set_cq_doorbell(Notifier* n) noexcept { cq_doorbell_ = n; }

  // -- user side ---------------------------------------------------------

  PushResult sq_push(IoRequest req, Nanos now) {
    validate_request(req, cfg_.capacity_bytes, cfg_.block_size);
    const std::uint64_t tail = sq_.tail();
    if (!room_for(1)) return {PushStatus::QueueFull, 0};
    req.request_id = tail;
    req.submit_time = now;
    req.link = false;
    if (!sq_.try_push(req)) return {PushStatus::QueueFull, 0};
    ring_sq();
    return {PushStatus::Accepted, tail};
  }

  // All-or-nothing enqueue of an ordered chain; every element but the last
  // gets the link flag.
  PushResult submit_linked(std::span<const IoRequest> reqs, Nanos now) {
    if (reqs.empty()) throw InvalidRequest("empty chain");
    if (reqs.size() > sq_.capacity()) throw InvalidRequest("chain longer than the submission queue");
    for (const auto& r : reqs) validate_request(r, cfg_.capacity_bytes, cfg_.block_size);
    if (!room_for(reqs.size())) return {PushStatus::QueueFull, 0};
    const std::uint64_t tail = sq_.tail();
    chain_scratch_.assign(reqs.begin(), reqs.end());
    for (std::size_t i = 0; i < chain_scratch_.size(); ++i) {
      chain_scratch_[i].request_id = tail + i;
      chain_scratch_[i].submit_time = now;
      chain_scratch_[i].link = i + 1 < chain_scratch_.size();
    }
    if (!sq_.try_push_all(chain_scratch_)) return {PushStatus::QueueFull, 0};
    ring_sq();
    return {PushStatus::Accepted, tail};
  }

  // Producer-side view of how many more requests a push would accept.
  std::size_t push_room() {
    const std::uint64_t unreaped = sq_.tail() - cq_.head();
    const std::size_t cq_room = unreaped >= cq_.capacity() ? 0 : cq_.capacity() - static_cast<std::size_t>(unreaped);
    return std::min(sq_.free_slots(), cq_room);
  }

  std::size_t cq_reap(std::span<Completion> out) {
    std::size_t n = 0;
    while (n < out.size()) {
      auto c = cq_.try_pop();
      if (!c) break;
      out[n++] = *c;
    }
    return n;
  }

  std::vector<Completion> cq_reap(std::size_t max) {
    if (max == 0) throw std::invalid_argument("cq_reap: max must be >= 1");
    std::vector<Completion> out;
    while (out.size() < max) {
      auto c = cq_.try_pop();
      if (!c) break;
      out.push_back(*c);
    }
    return out;
  }

  bool cq_ready() { return cq_.peek() != nullptr; }

  // Snapshots safe to take from any thread; stale by the time they are used.
  bool cq_nonempty_hint() const noexcept { return cq_.tail() != cq_.head(); }
  std::size_t push_room_hint() const noexcept {
    const std::uint64_t sq_tail = sq_.tail();
    const std::uint64_t sq_used = sq_tail - std::min(sq_tail, sq_.head());
    const std::uint64_t unreaped = sq_tail - std::min(sq_tail, cq_.head());
    const std::uint64_t sq_room = sq_used >= sq_.capacity() ? 0 : sq_.capacity() - sq_used;
    const std::uint64_t cq_room = unreaped >= cq_.capacity() ? 0 : cq_.capacity() - unreaped;
    return static_cast<std::size_t>(std::min(sq_room, cq_room));
  }

  Depth depth() const noexcept {
    const std::uint64_t sq_tail = sq_.tail();
    const std::uint64_t cq_tail = cq_.tail();
    return {sq_.size(), cq_.size(), static_cast<std::size_t>(sq_tail - std::min(sq_tail, cq_tail))};
  }

  std::uint64_t accepted() const noexcept { return sq_.tail(); }
  std::uint64_t delivered() const noexcept { return cq_.tail(); }
  std::uint64_t reaped() const noexcept { return cq_.head(); }

  // -- device side -------------------------------------------------------

  const IoRequest* sq_peek(std::size_t i = 0) { return sq_.peek_at(i); }
  std::optional<IoRequest> sq_consume() { return sq_.try_pop(); }
  std::uint64_t sq_tail() const noexcept { return sq_.tail(); }

  void cq_post(const Completion& c) {
    if (!cq_.try_push(c)) throw std::logic_error("completion queue overflow");
    if (cq_doorbell_) cq_doorbell_->notify();
  }

 private:
  static const ApiConfig& checked(const ApiConfig& cfg) {
    auto v = ring_config_violations(cfg);
    if (!v.empty()) throw std::invalid_argument("ApiInstance: " + v.front());
    return cfg;
  }

  bool room_for(std::size_t n) {
    const std::uint64_t unreaped = sq_.tail() - cq_.head();
    return unreaped + n <= cq_.capacity() && sq_.free_slots() >= n;
  }

  void ring_sq() {
    if (sq_doorbell_) sq_doorbell_->notify();
  }

  ApiConfig cfg_;
  InstanceId id_ = 0;
  SpscRing<IoRequest> sq_;
  SpscRing<Completion> cq_;
  Notifier* sq_doorbell_ = nullptr;
  Notifier* cq_doorbell_ = nullptr;
  std::vector<IoRequest> chain_scratch_;
};

// Fixed table of in-flight records indexed by a slot number carried in the
// request's user_data. Free slots circulate through an SPSC ring: the
// submitting side acquires, the reaping side releases, so the two sides may
// live on different threads.
template <typename T>
class SlotTable {
 public:
  explicit SlotTable(std::size_t capacity) : entries_(capacity), free_(capacity) {
    for (std::uint32_t i = 0; i < capacity; ++i) free_.try_push(i);
  }

  std::optional<std::uint32_t> acquire(T value) {
    auto slot = free_.try_pop();
    if (!slot) return std::nullopt;
    entries_[*slot] = std::move(value);
    return slot;
  }

  T release(std::uint32_t slot) {
    T value = std::move(entries_[slot]);
    entries_[slot] = T{};
    free_.try_push(slot);
    return value;
  }

  T& at(std::uint32_t slot) { return entries_[slot]; }
  std::size_t capacity() const noexcept { return entries_.size(); }

 private:
  std::vector<T> entries_;
  SpscRing<std::uint32_t> free_;
};

// What every device implementation offers to a single submitter/reaper pair.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual PushResult push_submission(const IoRequest& req) = 0;
  virtual PushResult push_linked(std::span<const IoRequest> reqs) = 0;
  virtual std::vector<Completion> reap_completions(std::size_t max) = 0;
  // Moves the device forward; returns false when nothing is pending anywhere.
  virtual bool progress() = 0;
  virtual Depth depth() const = 0;
  virtual std::uint64_t capacity_bytes() const = 0;
  virtual std::uint32_t block_size() const = 0;
};

}  // namespace ringrt
