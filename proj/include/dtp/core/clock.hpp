#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <queue>
#include <unordered_map>
#include <vector>

#include "dtp/core/error.hpp"
#include "dtp/core/time.hpp"

namespace dtp {

enum class ClockMode { Virtual, Realtime };

using TimerId = std::uint64_t;

/// Single logical timeline. In virtual mode time moves only through
/// advance(); due timers fire ordered by (deadline, registration order).
/// A periodic timer keeps the registration order it was created with.
class VirtualClock {
 public:
  using Callback = std::function<void(Timestamp)>;

  explicit VirtualClock(ClockMode mode = ClockMode::Virtual)
      : mode_(mode), wall_start_(std::chrono::steady_clock::now()) {}

  VirtualClock(const VirtualClock&) = delete;
  VirtualClock& operator=(const VirtualClock&) = delete;

  ClockMode mode() const { return mode_; }

  Timestamp now() const {
    if (mode_ == ClockMode::Realtime) {
      auto el = std::chrono::steady_clock::now() - wall_start_;
      return Timestamp{static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(el).count())};
    }
    std::lock_guard lock(mu_);
    return now_;
  }

  TimerId schedule_at(Timestamp deadline, Callback cb) { return add(deadline, Duration::zero(), std::move(cb)); }

  TimerId schedule_after(Duration d, Callback cb) { return schedule_at(now() + d, std::move(cb)); }

  /// Fires at first, first + period, first + 2*period, ...
  TimerId schedule_every(Duration period, Callback cb, Timestamp first) {
    if (period <= Duration::zero()) throw ValidationError("timer period must be positive");
    return add(first, period, std::move(cb));
  }

  TimerId schedule_every(Duration period, Callback cb) {
    return schedule_every(period, std::move(cb), now() + period);
  }

  void cancel(TimerId id) {
    std::lock_guard lock(mu_);
    timers_.erase(id);
  }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return timers_.size();
  }

  /// Moves virtual time forward by dt, firing every timer that comes due.
  /// Timers registered by callbacks fire too if due within the window.
  std::vector<TimerId> advance(Duration dt) {
    if (mode_ != ClockMode::Virtual) throw ModeError("advance() requires a virtual clock");
    if (dt < Duration::zero()) throw ValidationError("cannot advance by a negative duration");
    Timestamp target;
    {
      std::lock_guard lock(mu_);
      target = now_ + dt;
    }
    auto fired = fire_until(target);
    std::lock_guard lock(mu_);
    now_ = target;
    return fired;
  }

  /// Realtime mode: fires timers whose deadline has passed on the wall clock.
  std::vector<TimerId> run_due() {
    if (mode_ != ClockMode::Realtime) throw ModeError("run_due() requires a realtime clock");
    return fire_until(now());
  }

 private:
  struct Timer {
    Timestamp deadline;
    std::uint64_t order = 0;
    Duration period{0};
    Callback cb;
  };

  struct QueueEntry {
    Timestamp deadline;
    std::uint64_t order;
    TimerId id;
    bool operator>(const QueueEntry& o) const {
      if (deadline != o.deadline) return deadline > o.deadline;
      return order > o.order;
    }
  };

  TimerId add(Timestamp deadline, Duration period, Callback cb) {
    std::lock_guard lock(mu_);
    TimerId id = ++last_id_;
    std::uint64_t order = ++last_order_;
    timers_.emplace(id, Timer{deadline, order, period, std::move(cb)});
    queue_.push({deadline, order, id});
    return id;
  }

  std::vector<TimerId> fire_until(Timestamp target) {
    std::vector<TimerId> fired;
    for (;;) {
      Callback cb;
      Timestamp when;
      TimerId id;
      {
        std::lock_guard lock(mu_);
        while (!queue_.empty() && !timers_.contains(queue_.top().id)) queue_.pop();
        if (queue_.empty() || queue_.top().deadline > target) break;
        auto entry = queue_.top();
        queue_.pop();
        auto& timer = timers_.at(entry.id);
        if (timer.deadline != entry.deadline) continue;
        id = entry.id;
        when = entry.deadline;
        if (mode_ == ClockMode::Virtual) now_ = when;
        cb = timer.cb;
        if (timer.period > Duration::zero()) {
          timer.deadline = when + timer.period;
          queue_.push({timer.deadline, timer.order, id});
        } else {
          timers_.erase(id);
        }
      }
      fired.push_back(id);
      cb(when);
    }
    return fired;
  }

  ClockMode mode_;
  std::chrono::steady_clock::time_point wall_start_;
  mutable std::mutex mu_;
  Timestamp now_;
  std::unordered_map<TimerId, Timer> timers_;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue_;
  TimerId last_id_ = 0;
  std::uint64_t last_order_ = 0;
};

}  // namespace dtp
