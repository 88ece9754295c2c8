#pragma once

#include <atomic>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <new>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ringrt {

inline constexpr std::size_t kCacheLine = 64;

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// Fixed-capacity single-producer/single-consumer ring.
//
// head and tail are free-running 64-bit counters; slot = counter & mask. The
// producer owns tail, the consumer owns head, and each side publishes with a
// release store and observes the other with an acquire load. Each side keeps a
// private cached copy of the opposite counter so the common path touches only
// its own cache line.
template <typename T>
class SpscRing {
 public:
  explicit SpscRing(std::size_t capacity) : slots_(capacity), mask_(capacity - 1) {
    if (!is_power_of_two(capacity)) {
      throw std::invalid_argument("SpscRing capacity must be a power of two");
    }
  }

  SpscRing(const SpscRing&) = delete;
  SpscRing& operator=(const SpscRing&) = delete;

  std::size_t capacity() const noexcept { return slots_.size(); }

  // Producer side.
  bool try_push(const T& value) {
    const std::uint64_t tail = tail_.load(std::memory_order_relaxed);
    if (tail - cached_head_ == capacity()) {
      cached_head_ = head_.load(std::memory_order_acquire);
      if (tail - cached_head_ == capacity()) return false;
    }
    slots_[tail & mask_] = value;
    tail_.store(tail + 1, std::memory_order_release);
    assert(tail + 1 - head_.load(std::memory_order_relaxed) <= capacity());
    return true;
  }

  // Producer side. All-or-nothing: either every element becomes visible with a
  // single tail publication, or nothing is written.
  bool try_push_all(std::span<const T> values) {
    const std::uint64_t tail = tail_.load(std::memory_order_relaxed);
    if (values.size() > capacity()) return false;
    if (capacity() - (tail - cached_head_) < values.size()) {
      cached_head_ = head_.load(std::memory_order_acquire);
      if (capacity() - (tail - cached_head_) < values.size()) return false;
    }
    for (std::size_t i = 0; i < values.size(); ++i) slots_[(tail + i) & mask_] = values[i];
    tail_.store(tail + values.size(), std::memory_order_release);
    return true;
  }

  // Producer side: free slots as seen by the producer.
  std::size_t free_slots() {
    cached_head_ = head_.load(std::memory_order_acquire);
    return capacity() - static_cast<std::size_t>(tail_.load(std::memory_order_relaxed) - cached_head_);
  }

  // Consumer side.
  std::optional<T> try_pop() {
    const std::uint64_t head = head_.load(std::memory_order_relaxed);
    if (head == cached_tail_) {
      cached_tail_ = tail_.load(std::memory_order_acquire);
      if (head == cached_tail_) return std::nullopt;
    }
    T value = std::move(slots_[head & mask_]);
    head_.store(head + 1, std::memory_order_release);
    return value;
  }

  // Consumer side. Pointer stays valid until the next pop.
  const T* peek() {
    const std::uint64_t head = head_.load(std::memory_order_relaxed);
    if (head == cached_tail_) {
      cached_tail_ = tail_.load(std::memory_order_acquire);
      if (head == cached_tail_) return nullptr;
    }
    return &slots_[head & mask_];
  }

  // Consumer side: element `i` positions behind the head, if present.
  const T* peek_at(std::size_t i) {
    const std::uint64_t head = head_.load(std::memory_order_relaxed);
    if (head + i >= cached_tail_) {
      cached_tail_ = tail_.load(std::memory_order_acquire);
      if (head + i >= cached_tail_) return nullptr;
    }
    return &slots_[(head + i) & mask_];
  }

  // Snapshot from any thread; exact only when the ring is quiescent.
  std::size_t size() const noexcept {
    const std::uint64_t head = head_.load(std::memory_order_acquire);
    const std::uint64_t tail = tail_.load(std::memory_order_acquire);
    return tail >= head ? static_cast<std::size_t>(tail - head) : 0;
  }
  bool empty() const noexcept { return size() == 0; }

  std::uint64_t head() const noexcept { return head_.load(std::memory_order_acquire); }
  std::uint64_t tail() const noexcept { return tail_.load(std::memory_order_acquire); }

 private:
  alignas(kCacheLine) std::atomic<std::uint64_t> head_{0};
  std::uint64_t cached_tail_ = 0;  // consumer-private
  alignas(kCacheLine) std::atomic<std::uint64_t> tail_{0};
  std::uint64_t cached_head_ = 0;  // producer-private
  alignas(kCacheLine) std::vector<T> slots_;
  std::uint64_t mask_;
};

}  // namespace ringrt
