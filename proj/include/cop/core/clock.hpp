#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace cop {

// Microseconds since an arbitrary epoch. Node-local and advisory.
using Timestamp = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  virtual bool is_virtual() const { return false; }
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

// Advances only when told to. Used for deterministic in-process runs.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Timestamp start = 0) : now_(start) {}

  Timestamp now() const override { return now_.load(std::memory_order_acquire); }
  bool is_virtual() const override { return true; }

  void advance_to(Timestamp t) {
    Timestamp cur = now_.load();
    while (t > cur && !now_.compare_exchange_weak(cur, t)) {
    }
  }
  void advance_by(Timestamp dt) { now_.fetch_add(dt); }

 private:
  std::atomic<Timestamp> now_;
};

constexpr Timestamp millis(std::int64_t ms) { return ms * 1000; }

}  // namespace cop
