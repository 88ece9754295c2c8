#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "ring_core.hpp"

#if defined(RINGRT_NATIVE) && RINGRT_NATIVE && defined(__linux__)
#define RINGRT_HAVE_NATIVE 1
#include <fcntl.h>
#include <linux/io_uring.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <span>
#include <unordered_map>
#include <vector>
#else
#define RINGRT_HAVE_NATIVE 0
#include <span>
#include <vector>
#endif

namespace ringrt {

class UnsupportedPlatform : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class PrivilegeRequired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct NativeConfig {
  std::string path;
  bool direct_io = true;
  bool sq_poll = false;
  bool io_poll = false;
  std::uint32_t ring_entries = 256;
  std::uint32_t logical_block = 4096;
  Nanos sq_poll_idle = kMilli;

  bool operator==(const NativeConfig&) const = default;
};

inline constexpr bool native_available() noexcept { return RINGRT_HAVE_NATIVE == 1; }

#if RINGRT_HAVE_NATIVE

// Backend over a raw io_uring instance. Requests carry a buffer_id obtained
// from add_buffer(); the ring's user_data field carries the request id and the
// caller's user_data is restored on completion. Linked chains use the kernel's
// IOSQE_IO_LINK, so a failed link cancels its successors with -ECANCELED.
class NativeBackend final : public Backend {
 public:
  explicit NativeBackend(const NativeConfig& cfg) : cfg_(cfg) {
    if (cfg.ring_entries == 0 || (cfg.ring_entries & (cfg.ring_entries - 1)) != 0) {
      throw std::invalid_argument("ring_entries must be a power of two");
    }
    if (cfg.logical_block == 0) throw std::invalid_argument("logical_block must be positive");
    int flags = O_RDWR | O_CLOEXEC;
    if (cfg.direct_io) flags |= O_DIRECT;
    fd_ = ::open(cfg.path.c_str(), flags);
    if (fd_ < 0 && errno == EACCES) fd_ = ::open(cfg.path.c_str(), (flags & ~O_RDWR) | O_RDONLY);
    if (fd_ < 0) {
      const int e = errno;
      if (e == EINVAL && cfg.direct_io) throw UnsupportedPlatform("filesystem refuses O_DIRECT for " + cfg.path);
      throw std::runtime_error("open " + cfg.path + ": " + std::strerror(e));
    }
    struct stat st {};
    if (::fstat(fd_, &st) != 0) fail_setup("fstat");
    capacity_ = static_cast<std::uint64_t>(st.st_size);

    io_uring_params p{};
    if (cfg.sq_poll) {
      p.flags |= IORING_SETUP_SQPOLL;
      p.sq_thread_idle = static_cast<std::uint32_t>(std::max<Nanos>(1, cfg.sq_poll_idle / kMilli));
    }
    if (cfg.io_poll) p.flags |= IORING_SETUP_IOPOLL;
    p.flags |= IORING_SETUP_CQSIZE;
    p.cq_entries = cfg.ring_entries * 2;
    ring_fd_ = static_cast<int>(::syscall(__NR_io_uring_setup, cfg.ring_entries, &p));
    if (ring_fd_ < 0) {
      const int e = errno;
      ::close(fd_);
      fd_ = -1;
      if (e == EPERM) throw PrivilegeRequired("io_uring setup refused: polling mode needs privileges");
      if (e == ENOSYS) throw UnsupportedPlatform("kernel has no io_uring");
      throw std::runtime_error(std::string("io_uring_setup: ") + std::strerror(e));
    }
    params_ = p;
    map_rings();
  }

  NativeBackend(const NativeBackend&) = delete;
  NativeBackend& operator=(const NativeBackend&) = delete;

  ~NativeBackend() override {
    if (sq_ring_ && sq_ring_ != MAP_FAILED) ::munmap(sq_ring_, sq_ring_sz_);
    if (cq_ring_ && cq_ring_ != MAP_FAILED && cq_ring_ != sq_ring_) ::munmap(cq_ring_, cq_ring_sz_);
    if (sqes_ && sqes_ != MAP_FAILED) ::munmap(sqes_, sqes_sz_);
    if (ring_fd_ >= 0) ::close(ring_fd_);
    if (fd_ >= 0) ::close(fd_);
  }

  // Allocates a buffer aligned for direct I/O and returns its id.
  std::uint32_t add_buffer(std::size_t bytes) {
    const std::size_t align = std::max<std::size_t>(cfg_.logical_block, 4096);
    const std::size_t size = (bytes + align - 1) / align * align;
    void* mem = std::aligned_alloc(align, size);
    if (!mem) throw std::bad_alloc();
    std::memset(mem, 0, size);
    buffers_.push_back(Buffer{std::unique_ptr<std::uint8_t, Free>(static_cast<std::uint8_t*>(mem)), size});
    return static_cast<std::uint32_t>(buffers_.size() - 1);
  }
  std::span<std::uint8_t> buffer(std::uint32_t id) { return {buffers_.at(id).data.get(), buffers_.at(id).size}; }

  PushResult push_submission(const IoRequest& req) override {
    const IoRequest one[] = {req};
    return push_linked(one);
  }

  PushResult push_linked(std::span<const IoRequest> reqs) override {
    if (reqs.empty()) throw InvalidRequest("empty chain");
    if (reqs.size() > params_.sq_entries) throw InvalidRequest("chain longer than the submission queue");
    for (const auto& r : reqs) check(r);
    const std::uint32_t head = load_acquire(sq_head_);
    const std::uint32_t tail = *sq_tail_;
    if (params_.sq_entries - (tail - head) < reqs.size()) return {PushStatus::QueueFull, 0};
    if (inflight_.size() + reqs.size() > params_.cq_entries) return {PushStatus::QueueFull, 0};
    const RequestId first = next_id_;
    const Nanos now = clock_now();
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      IoRequest r = reqs[i];
      r.request_id = next_id_++;
      r.submit_time = now;
      r.link = i + 1 < reqs.size();
      const std::uint32_t idx = (tail + static_cast<std::uint32_t>(i)) & *sq_mask_;
      io_uring_sqe& sqe = sqes_[idx];
      std::memset(&sqe, 0, sizeof sqe);
      fill(sqe, r);
      if (r.link) sqe.flags |= IOSQE_IO_LINK;
      sq_array_[idx] = idx;
      inflight_.emplace(r.request_id, r);
    }
    store_release(sq_tail_, tail + static_cast<std::uint32_t>(reqs.size()));
    enter(static_cast<unsigned>(reqs.size()), 0);
    return {PushStatus::Accepted, first};
  }

  std::vector<Completion> reap_completions(std::size_t max) override {
    std::vector<Completion> out;
    std::uint32_t head = *cq_head_;
    const std::uint32_t tail = load_acquire(cq_tail_);
    while (head != tail && out.size() < max) {
      const io_uring_cqe& cqe = cqes_[head & *cq_mask_];
      auto it = inflight_.find(cqe.user_data);
      if (it == inflight_.end()) throw std::logic_error("completion for unknown request");
      Completion c;
      c.request_id = it->first;
      c.user_data = it->second.user_data;
      c.submit_time = it->second.submit_time;
      c.complete_time = clock_now();
      if (cqe.res == -ECANCELED) {
        c.status = CompletionStatus::Canceled;
        c.error_code = ECANCELED;
      } else if (cqe.res < 0) {
        c.status = CompletionStatus::Error;
        c.error_code = -cqe.res;
      } else {
        c.bytes = static_cast<std::uint32_t>(cqe.res);
      }
      inflight_.erase(it);
      out.push_back(c);
      ++head;
    }
    store_release(cq_head_, head);
    return out;
  }

  bool progress() override {
    if (inflight_.empty()) return false;
    if (load_acquire(cq_tail_) == *cq_head_) enter(0, 1);
    return true;
  }

  Depth depth() const override {
    const std::uint32_t sq = *sq_tail_ - load_acquire(sq_head_);
    const std::uint32_t cq = load_acquire(cq_tail_) - *cq_head_;
    return {sq, cq, inflight_.size() - std::min<std::size_t>(inflight_.size(), cq)};
  }
  std::uint64_t capacity_bytes() const override { return capacity_; }
  std::uint32_t block_size() const override { return cfg_.logical_block; }
  const NativeConfig& config() const noexcept { return cfg_; }

 private:
  struct Free {
    void operator()(std::uint8_t* p) const noexcept { std::free(p); }
  };
  struct Buffer {
    std::unique_ptr<std::uint8_t, Free> data;
    std::size_t size = 0;
  };

  static std::uint32_t load_acquire(const std::uint32_t* p) {
    return std::atomic_ref<const std::uint32_t>(*p).load(std::memory_order_acquire);
  }
  static void store_release(std::uint32_t* p, std::uint32_t v) {
    std::atomic_ref<std::uint32_t>(*p).store(v, std::memory_order_release);
  }
  static Nanos clock_now() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  [[noreturn]] void fail_setup(const char* what) {
    const int e = errno;
    if (ring_fd_ >= 0) ::close(ring_fd_);
    if (fd_ >= 0) ::close(fd_);
    ring_fd_ = fd_ = -1;
    throw std::runtime_error(std::string(what) + ": " + std::strerror(e));
  }

  void map_rings() {
    sq_ring_sz_ = params_.sq_off.array + params_.sq_entries * sizeof(std::uint32_t);
    cq_ring_sz_ = params_.cq_off.cqes + params_.cq_entries * sizeof(io_uring_cqe);
    const bool single = params_.features & IORING_FEAT_SINGLE_MMAP;
    if (single) sq_ring_sz_ = cq_ring_sz_ = std::max(sq_ring_sz_, cq_ring_sz_);
    sq_ring_ = ::mmap(nullptr, sq_ring_sz_, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_POPULATE, ring_fd_,
                      IORING_OFF_SQ_RING);
    if (sq_ring_ == MAP_FAILED) fail_setup("mmap sq ring");
    cq_ring_ = single ? sq_ring_
                      : ::mmap(nullptr, cq_ring_sz_, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_POPULATE, ring_fd_,
                               IORING_OFF_CQ_RING);
    if (cq_ring_ == MAP_FAILED) fail_setup("mmap cq ring");
    sqes_sz_ = params_.sq_entries * sizeof(io_uring_sqe);
    void* s = ::mmap(nullptr, sqes_sz_, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_POPULATE, ring_fd_, IORING_OFF_SQES);
    if (s == MAP_FAILED) fail_setup("mmap sqes");
    sqes_ = static_cast<io_uring_sqe*>(s);

    auto* sq = static_cast<std::uint8_t*>(sq_ring_);
    sq_head_ = reinterpret_cast<std::uint32_t*>(sq + params_.sq_off.head);
    sq_tail_ = reinterpret_cast<std::uint32_t*>(sq + params_.sq_off.tail);
    sq_mask_ = reinterpret_cast<std::uint32_t*>(sq + params_.sq_off.ring_mask);
    sq_flags_ = reinterpret_cast<std::uint32_t*>(sq + params_.sq_off.flags);
    sq_array_ = reinterpret_cast<std::uint32_t*>(sq + params_.sq_off.array);
    auto* cq = static_cast<std::uint8_t*>(cq_ring_);
    cq_head_ = reinterpret_cast<std::uint32_t*>(cq + params_.cq_off.head);
    cq_tail_ = reinterpret_cast<std::uint32_t*>(cq + params_.cq_off.tail);
    cq_mask_ = reinterpret_cast<std::uint32_t*>(cq + params_.cq_off.ring_mask);
    cqes_ = reinterpret_cast<io_uring_cqe*>(cq + params_.cq_off.cqes);
  }

  void check(const IoRequest& r) const {
    const bool data = r.op == OpKind::Read || r.op == OpKind::Write;
    if (data && cfg_.direct_io && (r.offset % cfg_.logical_block != 0 || r.length % cfg_.logical_block != 0)) {
      throw AlignmentError("direct I/O needs offset and length aligned to the logical block");
    }
    validate_request(r, capacity_, cfg_.logical_block);
    if (!data) return;
    if (r.buffer_id >= buffers_.size()) throw InvalidRequest("unknown buffer_id");
    if (buffers_[r.buffer_id].size < r.length) throw InvalidRequest("buffer smaller than request");
  }

  void fill(io_uring_sqe& sqe, const IoRequest& r) {
    sqe.fd = fd_;
    sqe.user_data = r.request_id;
    switch (r.op) {
      case OpKind::Read:
      case OpKind::Write:
        sqe.opcode = r.op == OpKind::Read ? IORING_OP_READ : IORING_OP_WRITE;
        sqe.off = r.offset;
        sqe.addr = reinterpret_cast<std::uint64_t>(buffers_[r.buffer_id].data.get());
        sqe.len = r.length;
        break;
      case OpKind::Fsync: sqe.opcode = IORING_OP_FSYNC; break;
      case OpKind::Nop:
        sqe.opcode = IORING_OP_NOP;
        sqe.fd = -1;
        break;
    }
  }

  void enter(unsigned to_submit, unsigned min_complete) {
    unsigned flags = min_complete ? IORING_ENTER_GETEVENTS : 0;
    if (cfg_.sq_poll) {
      if (std::atomic_ref<std::uint32_t>(*sq_flags_).load(std::memory_order_acquire) & IORING_SQ_NEED_WAKEUP) {
        flags |= IORING_ENTER_SQ_WAKEUP;
      } else if (!min_complete) {
        return;
      }
      to_submit = 0;
    }
    while (::syscall(__NR_io_uring_enter, ring_fd_, to_submit, min_complete, flags, nullptr, 0) < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EBUSY) return;
      throw std::runtime_error(std::string("io_uring_enter: ") + std::strerror(errno));
    }
  }

  NativeConfig cfg_;
  int fd_ = -1;
  int ring_fd_ = -1;
  std::uint64_t capacity_ = 0;
  io_uring_params params_{};
  void* sq_ring_ = nullptr;
  void* cq_ring_ = nullptr;
  std::size_t sq_ring_sz_ = 0;
  std::size_t cq_ring_sz_ = 0;
  std::size_t sqes_sz_ = 0;
  io_uring_sqe* sqes_ = nullptr;
  io_uring_cqe* cqes_ = nullptr;
  std::uint32_t* sq_head_ = nullptr;
  std::uint32_t* sq_tail_ = nullptr;
  std::uint32_t* sq_mask_ = nullptr;
  std::uint32_t* sq_flags_ = nullptr;
  std::uint32_t* sq_array_ = nullptr;
  std::uint32_t* cq_head_ = nullptr;
  std::uint32_t* cq_tail_ = nullptr;
  std::uint32_t* cq_mask_ = nullptr;
  RequestId next_id_ = 0;
  std::unordered_map<RequestId, IoRequest> inflight_;
  std::vector<Buffer> buffers_;
};

inline std::unique_ptr<NativeBackend> native_open(const NativeConfig& cfg) {
  return std::make_unique<NativeBackend>(cfg);
}

#else

// Stand-in when the native backend is not compiled in: construction fails.
class NativeBackend final : public Backend {
 public:
  explicit NativeBackend(const NativeConfig&) { unsupported(); }
  std::uint32_t add_buffer(std::size_t) { unsupported(); }
  std::span<std::uint8_t> buffer(std::uint32_t) { unsupported(); }
  PushResult push_submission(const IoRequest&) override { unsupported(); }
  PushResult push_linked(std::span<const IoRequest>) override { unsupported(); }
  std::vector<Completion> reap_completions(std::size_t) override { unsupported(); }
  bool progress() override { unsupported(); }
  Depth depth() const override { unsupported(); }
  std::uint64_t capacity_bytes() const override { unsupported(); }
  std::uint32_t block_size() const override { unsupported(); }

 private:
  [[noreturn]] static void unsupported() {
    throw UnsupportedPlatform("built without the native backend (configure with -DRINGRT_NATIVE=ON on Linux)");
  }
};

inline std::unique_ptr<NativeBackend> native_open(const NativeConfig& cfg) {
  return std::make_unique<NativeBackend>(cfg);
}

#endif

}  // namespace ringrt
