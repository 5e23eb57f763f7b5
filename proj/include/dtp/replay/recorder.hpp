#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <thread>

#include "dtp/core/bus.hpp"
#include "dtp/core/clock.hpp"
#include "dtp/replay/log.hpp"
#include "dtp/transport/endpoint.hpp"

namespace dtp::replay {

/// Funnels bus envelopes and raw endpoint bytes into one ordered log.
class Recorder {
 public:
  explicit Recorder(const VirtualClock* clock = nullptr) : clock_(clock) {}

  ~Recorder() {
    for (auto& [bus, id] : subs_) bus->unsubscribe(id);
  }

  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  std::uint16_t add_channel(const std::string& name) {
    std::lock_guard lock(mu_);
    if (writer_) throw ModeError("channels must be declared before the sink is opened");
    if (auto id = log_.channel_id(name)) return *id;
    auto id = static_cast<std::uint16_t>(log_.channels.size());
    log_.channels.push_back({id, name});
    return id;
  }

  /// Streams records to `path` in addition to keeping them in memory.
  void open_sink(const std::string& path) {
    std::lock_guard lock(mu_);
    writer_ = std::make_unique<LogWriter>(path, log_.channels);
    for (const auto& r : log_.records) writer_->append(r);
  }

  /// Records every envelope matching `pattern` as its serialized bytes.
  void tap_bus(Bus& bus, const std::string& pattern, std::uint16_t channel) {
    auto id = bus.subscribe(pattern, [this, channel](const Envelope& e) {
      record(LogRecord{now(), channel, Direction::Bus, serialize(e)});
    });
    subs_.emplace_back(&bus, id);
  }

  /// Records the raw bytes a driver-side endpoint receives (from the device)
  /// and sends (to the device).
  void tap_endpoint(transport::Endpoint& ep, std::uint16_t channel) { ep.set_tap(endpoint_tap(channel)); }

  transport::Endpoint::Tap endpoint_tap(std::uint16_t channel) {
    return [this, channel](transport::TapDirection d, Timestamp t, ByteView b) {
      auto dir = d == transport::TapDirection::Inbound ? Direction::FromDevice : Direction::ToDevice;
      record(LogRecord{clock_ ? now() : t, channel, dir, Bytes(b.begin(), b.end())});
    };
  }

  void record(LogRecord r) {
    std::lock_guard lock(mu_);
    if (!log_.records.empty() && r.t < log_.records.back().t) throw ValidationError("log timestamps must be non-decreasing");
    if (writer_) writer_->append(r);
    log_.records.push_back(std::move(r));
  }

  const LogFile& log() const { return log_; }

  void close() {
    std::lock_guard lock(mu_);
    if (writer_) writer_->close();
    writer_.reset();
  }

 private:
  Timestamp now() const { return clock_ ? clock_->now() : Timestamp{}; }

  const VirtualClock* clock_;
  std::mutex mu_;
  LogFile log_;
  std::unique_ptr<LogWriter> writer_;
  std::vector<std::pair<Bus*, SubscriptionId>> subs_;
};

using ReplaySink = std::function<void(const LogRecord&)>;

/// Re-emits records when the virtual clock reaches their timestamps, in file
/// order. Records before a corrupt one are delivered before the error.
inline void replay_virtual(LogReader& reader, VirtualClock& clock, const ReplaySink& sink) {
  if (clock.mode() != ClockMode::Virtual) throw ModeError("virtual replay needs a virtual clock");
  while (auto r = reader.next()) {
    if (r->t > clock.now()) clock.advance(r->t - clock.now());
    sink(*r);
  }
}

/// Wall-clock replay: logged intervals are divided by `speed`.
inline void replay_realtime(LogReader& reader, double speed, const ReplaySink& sink) {
  if (!(speed > 0.0)) throw ValidationError("replay speed must be positive");
  auto start = std::chrono::steady_clock::now();
  std::optional<Timestamp> t0;
  while (auto r = reader.next()) {
    if (!t0) t0 = r->t;
    auto offset = std::chrono::nanoseconds(static_cast<std::int64_t>(static_cast<double>((r->t - *t0).count()) / speed));
    std::this_thread::sleep_until(start + offset);
    sink(*r);
  }
}

}  // namespace dtp::replay
