#pragma once

#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dtp/emulators/imu_frame.hpp"
#include "dtp/emulators/lidar_packet.hpp"
#include "dtp/emulators/nmea_encoder.hpp"
#include "dtp/scenario/scenario.hpp"
#include "dtp/transport/endpoint.hpp"
#include "dtp/transport/fault.hpp"

namespace dtp {

using transport::Endpoint;
using transport::TransportContext;

/// Truth sampled from a running scenario, with noise added by the emulator.
struct LiveSource {
  const Scenario* scenario = nullptr;
};

/// Device output bytes recorded earlier, re-emitted verbatim at their times.
struct ReplaySource {
  std::vector<transport::Chunk> chunks;
};

using GroundTruthSource = std::variant<std::monostate, LiveSource, ReplaySource>;

struct EmulatorConfig {
  std::string name;
  std::string connection;
  double rate_hz = 10.0;
  NoiseModel noise;
  std::uint64_t seed = 1;

  Duration period() const { return seconds_to_duration(1.0 / rate_hz); }
};

/// Listens on its endpoint and, on every tick, handles inbound commands and
/// emits at exact multiples of its period.
class Emulator {
 public:
  explicit Emulator(TransportContext& ctx, EmulatorConfig cfg)
      : ctx_(ctx), cfg_(std::move(cfg)), rng_(transport::splitmix64(cfg_.seed ^ name_salt(cfg_.name))) {
    if (!(cfg_.rate_hz > 0.0)) throw ValidationError("emulator " + cfg_.name + ": rate must be positive");
    cfg_.noise.validate();
  }

  virtual ~Emulator() = default;
  Emulator(const Emulator&) = delete;
  Emulator& operator=(const Emulator&) = delete;

  const EmulatorConfig& config() const { return cfg_; }

  void attach_source(GroundTruthSource src) {
    if (running()) throw ModeError("emulator " + cfg_.name + ": cannot change source while running");
    source_ = std::move(src);
    replay_pos_ = 0;
  }

  bool is_replay() const { return std::holds_alternative<ReplaySource>(source_); }

  /// Throws TransportError if the endpoint cannot be bound.
  void start() {
    if (std::holds_alternative<std::monostate>(source_)) throw ModeError("emulator " + cfg_.name + ": no source attached");
    ep_ = Endpoint::open(cfg_.connection, transport::Role::Listen, ctx_);
    next_emit_ = Timestamp{} + cfg_.period();
  }

  void stop() {
    if (ep_) ep_->close();
    ep_.reset();
  }

  bool running() const { return ep_ != nullptr; }
  Endpoint* endpoint() { return ep_.get(); }
  std::uint64_t frames_sent() const { return frames_sent_; }

  void on_tick(Timestamp now) {
    if (!ep_) return;
    ep_->poll();
    if (ep_->connected() && ep_->sessions() != session_) {
      session_ = ep_->sessions();
      on_session();
    }
    auto* replay = std::get_if<ReplaySource>(&source_);
    if (ep_->connected()) {
      for (auto& c : ep_->read()) {
        if (!replay) on_command_bytes(c.data);
      }
    }
    if (replay) {
      while (replay_pos_ < replay->chunks.size() && replay->chunks[replay_pos_].arrival <= now) {
        write(replay->chunks[replay_pos_++].data);
      }
      return;
    }
    while (next_emit_ <= now) {
      if (next_emit_ == now) emit(now, *std::get<LiveSource>(source_).scenario);
      next_emit_ = next_emit_ + cfg_.period();
    }
  }

 protected:
  virtual void emit(Timestamp now, const Scenario& sc) = 0;
  virtual void on_session() {}
  virtual void on_command_bytes(ByteView) {}

  void write(ByteView data) {
    if (!ep_ || !ep_->connected()) return;
    ep_->write(data);
    ++frames_sent_;
  }

  std::mt19937_64& rng() { return rng_; }
  double gaussian(double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0; }
  bool chance(double p) { return p > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

 private:
  static std::uint64_t name_salt(const std::string& s) {
    Fnv1a64 h;
    h.update(to_bytes(s));
    return h.digest();
  }

  TransportContext& ctx_;
  EmulatorConfig cfg_;
  std::mt19937_64 rng_;
  GroundTruthSource source_;
  std::size_t replay_pos_ = 0;
  std::unique_ptr<Endpoint> ep_;
  std::uint64_t session_ = 0;
  Timestamp next_emit_{};
  std::uint64_t frames_sent_ = 0;
};

class GpsEmulator : public Emulator {
 public:
  GpsEmulator(TransportContext& ctx, EmulatorConfig cfg, GeoCoordinate origin, std::string date = "150123")
      : Emulator(ctx, std::move(cfg)), origin_(origin), date_(std::move(date)) {}

 protected:
  void emit(Timestamp now, const Scenario& sc) override {
    auto fix = sc.truth_gps();
    fix.time = now;
    double sigma = config().noise.gps_sigma;
    if (sigma > 0.0) {
      Vec3 enu = geo_to_enu(fix.position, origin_);
      enu.x() += gaussian(sigma);
      enu.y() += gaussian(sigma);
      fix.position = enu_to_geo(enu, origin_);
    }
    write(to_bytes(nmea::encode_gga(fix) + nmea::encode_rmc(fix, date_)));
  }

 private:
  GeoCoordinate origin_;
  std::string date_;
};

class ImuEmulator : public Emulator {
 public:
  using Emulator::Emulator;

 protected:
  void emit(Timestamp now, const Scenario& sc) override {
    auto [accel, gyro] = sc.truth_imu();
    const auto& n = config().noise;
    gyro.z() += n.gyro_bias + gaussian(n.gyro_sigma);
    auto s = imu_from_si(now, {accel.x(), accel.y(), accel.z()}, {gyro.x(), gyro.y(), gyro.z()}, true);
    write(imu::encode_frame(s, seq_++));
  }

 private:
  std::uint8_t seq_ = 0;
};

/// Text-command session: START / STOP / INFO, one command per line.
class LidarEmulator : public Emulator {
 public:
  static constexpr std::size_t kMaxCommand = 64;

  LidarEmulator(TransportContext& ctx, EmulatorConfig cfg, ScanGeometry geometry)
      : Emulator(ctx, std::move(cfg)), geometry_(quantize(geometry)) {
    if (geometry_.max_range > 65.534) throw ValidationError("lidar max range must fit the millimetre range field");
  }

  bool streaming() const { return streaming_; }
  const ScanGeometry& geometry() const { return geometry_; }

  static ScanGeometry quantize(ScanGeometry g) {
    g.validate();
    g.start_angle = static_cast<double>(std::llround(g.start_angle * 1e6)) * 1e-6;
    g.increment = static_cast<double>(std::llround(g.increment * 1e6)) * 1e-6;
    return g;
  }

 protected:
  void on_session() override {
    streaming_ = false;
    line_.clear();
  }

  void on_command_bytes(ByteView data) override {
    for (auto b : data) {
      if (b == '\n') {
        handle(line_);
        line_.clear();
      } else if (line_.size() <= kMaxCommand) {
        line_.push_back(static_cast<char>(b));
      }
    }
  }

  void emit(Timestamp now, const Scenario& sc) override {
    if (!streaming_) return;
    const auto& n = config().noise;
    auto ranges = sc.truth_lidar(geometry_);
    LidarScan scan;
    scan.time = now;
    scan.scan_id = scan_id_++;
    scan.start_angle_urad = static_cast<std::int32_t>(std::llround(geometry_.start_angle * 1e6));
    scan.increment_urad = static_cast<std::uint32_t>(std::llround(geometry_.increment * 1e6));
    scan.ranges_mm.reserve(ranges.size());
    for (double r : ranges) {
      if (r > geometry_.max_range || chance(n.lidar_dropout)) {
        scan.ranges_mm.push_back(0);
        continue;
      }
      r += gaussian(n.lidar_sigma);
      scan.ranges_mm.push_back(static_cast<std::uint16_t>(std::clamp<long long>(std::llround(r * 1000.0), 1, 65535)));
    }
    write(lidar::encode_packet(scan));
  }

 private:
  void handle(std::string cmd) {
    if (!cmd.empty() && cmd.back() == '\r') cmd.pop_back();
    if (cmd.empty()) return;
    if (cmd == "START") {
      streaming_ = true;
    } else if (cmd == "STOP") {
      streaming_ = false;
    } else if (cmd == "INFO") {
      write(to_bytes(lidar::kInfoReply));
    } else {
      write(to_bytes(lidar::kUnknownReply));
    }
  }

  ScanGeometry geometry_;
  bool streaming_ = false;
  std::string line_;
  std::uint32_t scan_id_ = 0;
};

}  // namespace dtp
