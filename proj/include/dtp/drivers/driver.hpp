#pragma once

#include <memory>
#include <optional>
#include <string>

#include "dtp/core/bus.hpp"
#include "dtp/drivers/frame_decoders.hpp"
#include "dtp/drivers/nmea_parser.hpp"
#include "dtp/emulators/lidar_packet.hpp"
#include "dtp/transport/endpoint.hpp"

namespace dtp {

using transport::ConnectionString;
using transport::Endpoint;
using transport::Role;
using transport::TransportContext;

struct DriverConfig {
  std::string name;
  std::string connection;
  double rate_hz = 10.0;
  std::string topic_prefix = "sensors";
  /// Resyncs tolerated per connection before an error diagnostic is raised.
  std::uint64_t resync_limit = 1000;

  void validate() const {
    if (name.empty() || !is_valid_topic(name)) throw ValidationError("driver name must be a valid topic segment");
    if (!(rate_hz > 0.0)) throw ValidationError("driver " + name + ": rate must be positive");
    if (!is_valid_topic(topic_prefix)) throw ValidationError("driver " + name + ": invalid topic prefix");
    ConnectionString::parse(connection);
  }

  Duration period() const { return seconds_to_duration(1.0 / rate_hz); }
};

struct DriverDiagnostics {
  std::uint64_t frames_ok = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t resyncs = 0;
  std::uint64_t reconnects = 0;
  std::string last_error;

  bool operator==(const DriverDiagnostics&) const = default;
};

inline Bytes to_payload(const DriverDiagnostics& d) {
  ByteWriter w;
  w.put(d.frames_ok);
  w.put(d.frames_dropped);
  w.put(d.resyncs);
  w.put(d.reconnects);
  w.put_short_string(d.last_error);
  return w.take();
}

inline DriverDiagnostics diagnostics_from_payload(ByteView p) {
  ByteReader r(p);
  DriverDiagnostics d;
  d.frames_ok = r.get<std::uint64_t>();
  d.frames_dropped = r.get<std::uint64_t>();
  d.resyncs = r.get<std::uint64_t>();
  d.reconnects = r.get<std::uint64_t>();
  d.last_error = r.get_short_string();
  return d;
}

/// Common connection handling: connect, poll bytes into a protocol decoder,
/// publish measurements and reconnect with linear backoff (1, 2, 3 periods).
class Driver {
 public:
  static constexpr int kMaxReconnectAttempts = 3;

  Driver(Bus& bus, TransportContext& ctx, DriverConfig cfg, const std::string& suffix, const std::string& kind)
      : bus_(bus), ctx_(ctx), cfg_(std::move(cfg)) {
    cfg_.validate();
    bus_.register_kind(kind);
    bus_.register_kind(kinds::kDiagnostics);
    data_ = bus_.advertise(cfg_.topic_prefix + "/" + suffix, kind);
    diag_pub_ = bus_.advertise("diagnostics/" + cfg_.name, kinds::kDiagnostics);
  }

  virtual ~Driver() = default;
  Driver(const Driver&) = delete;
  Driver& operator=(const Driver&) = delete;

  const DriverConfig& config() const { return cfg_; }
  const std::string& topic() const { return data_.topic(); }

  /// Installed on the endpoint before any byte is exchanged.
  void set_tap(Endpoint::Tap tap) {
    tap_ = std::move(tap);
    if (ep_) ep_->set_tap(tap_);
  }

  /// Throws TransportError when the peer cannot be reached.
  void start() {
    ep_ = Endpoint::open(cfg_.connection, Role::Connect, ctx_);
    if (tap_) ep_->set_tap(tap_);
    was_connected_ = true;
    on_connected();
  }

  void stop() {
    if (ep_) ep_->close();
    ep_.reset();
  }

  bool running() const { return ep_ != nullptr; }
  bool failed() const { return failed_; }
  Endpoint* endpoint() { return ep_.get(); }

  void poll() {
    if (!ep_ || failed_) return;
    auto now = ctx_.now();
    if (ep_->connected()) {
      for (auto& chunk : ep_->read()) on_bytes(chunk.data, chunk.arrival);
      refresh_counters();
    }
    if (!ep_->connected()) handle_disconnect(now);
    publish_diagnostics(now, false);
  }

  DriverDiagnostics diagnostics() const { return diag_; }

 protected:
  virtual void on_bytes(ByteView data, Timestamp arrival) = 0;
  virtual void on_connected() {}
  virtual void reset_stream() = 0;
  virtual DecoderCounters counters() const = 0;

  void publish(Timestamp t, Bytes payload) { data_.publish(t, std::move(payload)); }
  void send(std::string_view text) { ep_->write(to_bytes(text)); }

 private:
  void refresh_counters() {
    auto c = counters();
    diag_.frames_ok = c.frames_ok;
    diag_.frames_dropped = c.frames_dropped;
    diag_.resyncs = c.resyncs;
    if (c.resyncs - resyncs_at_connect_ > cfg_.resync_limit && !resync_flagged_) {
      resync_flagged_ = true;
      set_error("resync limit exceeded");
    }
  }

  void handle_disconnect(Timestamp now) {
    if (was_connected_) {
      was_connected_ = false;
      attempts_ = 0;
      next_attempt_ = now + cfg_.period();
      reset_stream();
      set_error("peer disconnected");
      return;
    }
    if (now < next_attempt_) return;
    ++attempts_;
    if (ep_->reconnect()) {
      was_connected_ = true;
      diag_.reconnects = ep_->stats().reconnects;
      resyncs_at_connect_ = counters().resyncs;
      resync_flagged_ = false;
      on_connected();
      publish_diagnostics(now, true);
      return;
    }
    if (attempts_ >= kMaxReconnectAttempts) {
      failed_ = true;
      set_error("reconnect failed after " + std::to_string(attempts_) + " attempts");
      return;
    }
    next_attempt_ = next_attempt_ + cfg_.period() * (attempts_ + 1);
  }

  void set_error(std::string e) {
    diag_.last_error = std::move(e);
    publish_diagnostics(ctx_.now(), true);
  }

  void publish_diagnostics(Timestamp now, bool force) {
    if (!force && (diag_ == published_ || now < next_diag_)) return;
    published_ = diag_;
    next_diag_ = now + std::chrono::seconds(1);
    diag_pub_.publish(now, to_payload(diag_));
  }

  Bus& bus_;
  TransportContext& ctx_;
  DriverConfig cfg_;
  Publisher data_;
  Publisher diag_pub_;
  std::unique_ptr<Endpoint> ep_;
  Endpoint::Tap tap_;
  DriverDiagnostics diag_;
  DriverDiagnostics published_;
  Timestamp next_diag_{};
  bool was_connected_ = false;
  bool failed_ = false;
  int attempts_ = 0;
  Timestamp next_attempt_{};
  std::uint64_t resyncs_at_connect_ = 0;
  bool resync_flagged_ = false;
};

class GpsDriver : public Driver {
 public:
  GpsDriver(Bus& bus, TransportContext& ctx, DriverConfig cfg)
      : Driver(bus, ctx, std::move(cfg), "gps/fix", kinds::kGpsFix) {}

 protected:
  void on_bytes(ByteView data, Timestamp arrival) override {
    splitter_.feed(
        data,
        [&](std::string_view line) {
          auto parsed = nmea::parse_line(line);
          switch (parsed.status) {
            case nmea::LineStatus::Ok:
              ++counters_.frames_ok;
              if (auto fix = assembler_.push(parsed)) publish(arrival, to_payload(*fix));
              break;
            case nmea::LineStatus::Dropped:
              ++counters_.frames_dropped;
              break;
            case nmea::LineStatus::Unknown:
              break;
          }
        },
        [&] {
          ++counters_.frames_dropped;
          ++counters_.resyncs;
        });
  }

  void reset_stream() override {
    splitter_.reset();
    assembler_.reset();
  }

  DecoderCounters counters() const override { return counters_; }

 private:
  nmea::LineSplitter splitter_;
  nmea::FixAssembler assembler_;
  DecoderCounters counters_;
};

class ImuDriver : public Driver {
 public:
  ImuDriver(Bus& bus, TransportContext& ctx, DriverConfig cfg)
      : Driver(bus, ctx, std::move(cfg), "imu/sample", kinds::kImuSample) {}

 protected:
  void on_bytes(ByteView data, Timestamp arrival) override {
    decoder_.feed(data, [&](const ImuFrame& f) { publish(arrival, to_payload(f.sample)); });
  }
  void reset_stream() override { decoder_.reset(); }
  DecoderCounters counters() const override { return decoder_.counters(); }

 private:
  ImuStreamDecoder decoder_;
};

class LidarDriver : public Driver {
 public:
  LidarDriver(Bus& bus, TransportContext& ctx, DriverConfig cfg)
      : Driver(bus, ctx, std::move(cfg), "lidar/scan", kinds::kLidarScan) {}

 protected:
  void on_connected() override { send("START\n"); }

  void on_bytes(ByteView data, Timestamp arrival) override {
    decoder_.feed(data, [&](const LidarScan& s) { publish(arrival, to_payload(s)); });
  }
  void reset_stream() override { decoder_.reset(); }
  DecoderCounters counters() const override { return decoder_.counters(); }

 private:
  LidarStreamDecoder decoder_;
};

}  // namespace dtp
