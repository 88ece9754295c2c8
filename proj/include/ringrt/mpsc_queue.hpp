#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spsc_ring.hpp"

namespace ringrt {

// Bounded multi-producer queue (Vyukov's sequence-numbered cell array). Used as
// the per-instance inbox of the dispatch layer: any worker may push, only the
// owning I/O instance pops.
template <typename T>
class BoundedMpscQueue {
 public:
  explicit BoundedMpscQueue(std::size_t capacity) : cells_(capacity), mask_(capacity - 1) {
    if (!is_power_of_two(capacity)) {
      throw std::invalid_argument("BoundedMpscQueue capacity must be a power of two");
    }
    for (std::size_t i = 0; i < capacity; ++i) cells_[i].seq.store(i, std::memory_order_relaxed);
  }

  std::size_t capacity() const noexcept { return cells_.size(); }

  // Returns false when full. `cas_failures` counts lost races with other
  // producers (dispatch-layer contention).
  bool try_push(T value, std::uint64_t* cas_failures = nullptr) {
    std::uint64_t pos = enqueue_pos_.load(std::memory_order_relaxed);
    for (;;) {
      Cell& cell = cells_[pos & mask_];
      const std::uint64_t seq = cell.seq.load(std::memory_order_acquire);
      const auto diff = static_cast<std::int64_t>(seq) - static_cast<std::int64_t>(pos);
      if (diff == 0) {
        if (enqueue_pos_.compare_exchange_weak(pos, pos + 1, std::memory_order_relaxed)) {
          cell.value = std::move(value);
          cell.seq.store(pos + 1, std::memory_order_release);
          return true;
        }
        if (cas_failures) ++*cas_failures;
      } else if (diff < 0) {
        return false;
      } else {
        pos = enqueue_pos_.load(std::memory_order_relaxed);
      }
    }
  }

  std::optional<T> try_pop() {
    const std::uint64_t pos = dequeue_pos_.load(std::memory_order_relaxed);
    Cell& cell = cells_[pos & mask_];
    const std::uint64_t seq = cell.seq.load(std::memory_order_acquire);
    if (static_cast<std::int64_t>(seq) - static_cast<std::int64_t>(pos + 1) < 0) return std::nullopt;
    T value = std::move(cell.value);
    cell.seq.store(pos + capacity(), std::memory_order_release);
    dequeue_pos_.store(pos + 1, std::memory_order_relaxed);
    return value;
  }

  std::size_t size() const noexcept {
    const std::uint64_t enq = enqueue_pos_.load(std::memory_order_acquire);
    const std::uint64_t deq = dequeue_pos_.load(std::memory_order_acquire);
    return enq > deq ? static_cast<std::size_t>(enq - deq) : 0;
  }

 private:
  struct Cell {
    std::atomic<std::uint64_t> seq{0};
    T value{};
  };
  std::vector<Cell> cells_;
  std::uint64_t mask_;
  alignas(kCacheLine) std::atomic<std::uint64_t> enqueue_pos_{0};
  alignas(kCacheLine) std::atomic<std::uint64_t> dequeue_pos_{0};
};

}  // namespace ringrt
