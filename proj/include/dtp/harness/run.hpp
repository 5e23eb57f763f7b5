#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dtp/drivers/driver.hpp"
#include "dtp/emulators/emulator.hpp"
#include "dtp/harness/config.hpp"
#include "dtp/harness/report.hpp"
#include "dtp/replay/recorder.hpp"
#include "dtp/scenario/scenario.hpp"
#include "dtp/twin/twin.hpp"

namespace dtp::harness {

inline constexpr const char* kConfigChannel = "config";
inline constexpr const char* kBusChannel = "bus";

inline std::string raw_channel(Sensor s) { return "raw/" + sensor_name(s); }

struct RunOptions {
  bool record = false;
  std::string record_path;  // empty: keep the log in memory only
  bool realtime = false;
};

struct RunResult {
  RunReport report;
  std::optional<replay::LogFile> log;
};

/// Everything a replay needs from a recording.
struct ReplayInput {
  std::string config_text;
  std::vector<transport::Chunk> chunks[3];
  std::vector<Bytes> twin_states;  // serialized envelopes, in order
};

inline ReplayInput replay_input(const replay::LogFile& log) {
  ReplayInput in;
  auto cfg_ch = log.channel_id(kConfigChannel);
  auto bus_ch = log.channel_id(kBusChannel);
  std::optional<std::uint16_t> raw[3];
  for (auto s : kSensors) raw[static_cast<int>(s)] = log.channel_id(raw_channel(s));
  for (const auto& r : log.records) {
    if (cfg_ch && r.channel == *cfg_ch) {
      in.config_text = to_string(r.payload);
    } else if (bus_ch && r.channel == *bus_ch) {
      auto e = deserialize_envelope(r.payload);
      if (e.topic == "twin/state") in.twin_states.push_back(r.payload);
    } else {
      for (int i = 0; i < 3; ++i) {
        if (raw[i] && r.channel == *raw[i] && r.direction == replay::Direction::FromDevice) {
          in.chunks[i].push_back({r.t, r.payload});
        }
      }
    }
  }
  return in;
}

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t salt(const std::string& s) {
  Fnv1a64 h;
  h.update(to_bytes(s));
  return h.digest();
}

/// Truth-side bookkeeping; only present for live runs.
struct TruthProbe {
  double pose_sq = 0.0;
  double yaw_sq = 0.0;
  std::size_t samples = 0;
  std::size_t volume_increases = 0;
  double last_volume = 0.0;
  std::optional<MountCalibration> calibration;
};

class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, const ReplayInput* replay, const RunOptions& opt)
      : cfg_(cfg), replay_(replay), opt_(opt), clock_(opt.realtime ? ClockMode::Realtime : ClockMode::Virtual) {
    ctx_.clock = &clock_;
  }

  RunResult run() {
    auto wall0 = std::chrono::steady_clock::now();
    report_.mode = replay_ ? "replay" : "live";
    report_.scenario_id = cfg_.scenario.id;
    report_.seed = cfg_.scenario.seed;
    try {
      setup();
      loop();
    } catch (const Error& e) {
      fail(stage_ + ": " + e.what());
    }
    teardown();
    report_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    RunResult out{std::move(report_), std::nullopt};
    if (recorder_) out.log = recorder_->log();
    return out;
  }

 private:
  void fail(std::string why) {
    if (report_.failure.empty()) report_.failure = std::move(why);
    report_.exit_code = static_cast<int>(ExitCode::RuntimeFailure);
  }

  void setup() {
    const auto& sc = cfg_.scenario;
    hash_sub_ = bus_.subscribe("*", [this](const Envelope& e) {
      hash_.update(serialize(e));
      ++report_.envelopes;
    });
    state_sub_ = bus_.subscribe("twin/state", [this](const Envelope& e) { on_state(e); });
    calib_sub_ = bus_.subscribe("twin/calibration", [this](const Envelope& e) {
      probe_.calibration = calibration_from_payload(e.payload);
    });
    bus_.register_kind(kinds::kTwinCommand);
    command_pub_ = bus_.advertise("twin/command", kinds::kTwinCommand);

    if (opt_.record) {
      stage_ = "recorder";
      recorder_ = std::make_unique<replay::Recorder>(&clock_);
      auto cfg_ch = recorder_->add_channel(kConfigChannel);
      auto bus_ch = recorder_->add_channel(kBusChannel);
      for (auto s : kSensors) raw_ch_[static_cast<int>(s)] = recorder_->add_channel(raw_channel(s));
      if (!opt_.record_path.empty()) recorder_->open_sink(opt_.record_path);
      recorder_->record({clock_.now(), cfg_ch, replay::Direction::Bus, to_bytes(cfg_.text)});
      recorder_->tap_bus(bus_, "*", bus_ch);
    }

    if (!replay_) {
      stage_ = "scenario";
      scenario_ = std::make_unique<Scenario>(sc);
      probe_.last_volume = scenario_->volume();
    }

    stage_ = "twin";
    TwinConfig tc;
    tc.origin = sc.world.origin;
    tc.grid = sc.world.heap_region;
    tc.footprint = sc.vehicle.footprint;
    tc.gps_mount = sc.rig.gps_mount;
    tc.lidar_mount = sc.rig.lidar_mount;
    tc.filter = cfg_.filter;
    tc.calibration = cfg_.calibration;
    tc.scan_period = seconds_to_duration(1.0 / sc.rig.lidar_rate_hz);
    twin_ = std::make_unique<Twin>(bus_, clock_, tc);

    for (auto s : kSensors) {
      stage_ = "emulator " + sensor_name(s);
      EmulatorConfig ec{sensor_name(s), cfg_.wiring_of(s).device, cfg_.rate_of(s), sc.noise, sc.seed};
      std::unique_ptr<Emulator> em;
      switch (s) {
        case Sensor::Gps: em = std::make_unique<GpsEmulator>(ctx_, ec, sc.world.origin); break;
        case Sensor::Imu: em = std::make_unique<ImuEmulator>(ctx_, ec); break;
        case Sensor::Lidar: em = std::make_unique<LidarEmulator>(ctx_, ec, sc.rig.lidar); break;
      }
      if (replay_) {
        em->attach_source(ReplaySource{replay_->chunks[static_cast<int>(s)]});
      } else {
        em->attach_source(LiveSource{scenario_.get()});
      }
      em->start();
      emulators_.push_back(std::move(em));
      apply_faults(s, FaultSide::Device, *emulators_.back()->endpoint());
    }

    for (auto s : kSensors) {
      stage_ = "driver " + sensor_name(s);
      DriverConfig dc;
      dc.name = sensor_name(s);
      dc.connection = driver_connection(s);
      dc.rate_hz = cfg_.rate_of(s);
      std::unique_ptr<Driver> d;
      switch (s) {
        case Sensor::Gps: d = std::make_unique<GpsDriver>(bus_, ctx_, dc); break;
        case Sensor::Imu: d = std::make_unique<ImuDriver>(bus_, ctx_, dc); break;
        case Sensor::Lidar: d = std::make_unique<LidarDriver>(bus_, ctx_, dc); break;
      }
      if (recorder_) d->set_tap(recorder_->endpoint_tap(raw_ch_[static_cast<int>(s)]));
      drivers_.push_back(std::move(d));
      drivers_.back()->start();
      apply_faults(s, FaultSide::Driver, *drivers_.back()->endpoint());
    }

    commands_ = cfg_.commands;
    std::stable_sort(commands_.begin(), commands_.end(),
                     [](const ScheduledCommand& a, const ScheduledCommand& b) { return a.at < b.at; });
  }

  std::string driver_connection(Sensor s) {
    const auto& w = cfg_.wiring_of(s);
    if (!w.driver.empty()) return w.driver;
    auto cs = transport::ConnectionString::parse(w.device);
    if (cs.scheme == transport::Scheme::Tcp && cs.port() == 0) {
      return "tcp://" + cs.host() + ":" + std::to_string(emulators_[static_cast<int>(s)]->endpoint()->port());
    }
    return w.device;
  }

  /// Replays reproduce recorded bytes, so only faults that change the link
  /// state (not the bytes) are re-applied.
  void apply_faults(Sensor s, FaultSide side, transport::Endpoint& ep) {
    for (std::size_t i = 0; i < cfg_.faults.size(); ++i) {
      const auto& f = cfg_.faults[i];
      if (f.target != s || f.side != side) continue;
      auto spec = f.spec;
      if (replay_ && (std::holds_alternative<transport::Corrupt>(spec) || std::holds_alternative<transport::Latency>(spec))) {
        continue;
      }
      if (auto c = std::get_if<transport::Corrupt>(&spec); c && f.derive_seed) {
        c->seed = transport::splitmix64(cfg_.scenario.seed ^ salt("fault/" + sensor_name(s) + "/" + std::to_string(i)));
      }
      ep.inject_fault(spec);
    }
  }

  void tick(Timestamp now) {
    if (ticks_done_ >= ticks_total_) return;
    ++ticks_done_;
    stage_ = "scenario";
    if (scenario_) {
      scenario_->tick();
      double v = scenario_->volume();
      if (v > probe_.last_volume) ++probe_.volume_increases;
      probe_.last_volume = v;
    }
    for (std::size_t i = 0; i < emulators_.size(); ++i) {
      stage_ = "emulator " + sensor_name(kSensors[i]);
      emulators_[i]->on_tick(now);
    }
    for (std::size_t i = 0; i < drivers_.size(); ++i) {
      stage_ = "driver " + sensor_name(kSensors[i]);
      drivers_[i]->poll();
      if (drivers_[i]->failed()) {
        throw TransportError(drivers_[i]->diagnostics().last_error);
      }
    }
    stage_ = "twin";
    while (next_command_ < commands_.size() && Timestamp::from_seconds(commands_[next_command_].at) <= now) {
      command_pub_.publish(now, to_bytes(commands_[next_command_++].command));
    }
    twin_->on_tick(now);
  }

  void loop() {
    const auto& sc = cfg_.scenario;
    ticks_total_ = static_cast<std::uint64_t>(std::floor(sc.duration / sc.tick_dt + 1e-9));
    auto dt = sc.tick();
    stage_ = "clock";
    timer_ = clock_.schedule_every(dt, [this](Timestamp now) { tick(now); });
    if (opt_.realtime) {
      while (ticks_done_ < ticks_total_) {
        clock_.run_due();
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    } else {
      while (ticks_done_ < ticks_total_) clock_.advance(dt);
    }
    clock_.cancel(timer_);
  }

  void on_state(const Envelope& e) {
    twin_states_.push_back(serialize(e));
    if (!scenario_) return;
    auto s = twin_state_from_payload(e.payload);
    if (s.pose.degraded) return;
    const auto& truth = scenario_->state().pose;
    double dx = s.pose.position.x() - truth.translation.x();
    double dy = s.pose.position.y() - truth.translation.y();
    double dyaw = normalize_angle(s.pose.yaw - truth.yaw);
    probe_.pose_sq += dx * dx + dy * dy;
    probe_.yaw_sq += dyaw * dyaw;
    ++probe_.samples;
  }

  void teardown() {
    const auto& sc = cfg_.scenario;
    report_.virtual_seconds = static_cast<double>(ticks_done_) * sc.tick_dt;
    for (std::size_t i = 0; i < drivers_.size(); ++i) {
      report_.drivers.push_back({sensor_name(kSensors[i]), drivers_[i]->diagnostics()});
    }
    if (twin_) report_.final_state = twin_->state(clock_.now());
    if (scenario_ && ticks_done_ > 0) collect_metrics();
    report_.determinism_hash = hex64(hash_.digest());
    if (replay_ && report_.failure.empty()) {
      report_.replay_match = twin_states_ == replay_->twin_states;
      if (!*report_.replay_match) report_.exit_code = static_cast<int>(ExitCode::CheckFailed);
    }

    for (auto& d : drivers_) d->stop();
    for (auto& e : emulators_) e->stop();
    twin_.reset();
    drivers_.clear();
    emulators_.clear();
    for (auto id : {hash_sub_, state_sub_, calib_sub_}) bus_.unsubscribe(id);
    if (recorder_) {
      try {
        recorder_->close();
      } catch (const Error& e) {
        fail(std::string("recorder: ") + e.what());
      }
    }
  }

  void collect_metrics() {
    auto& m = report_.metrics;
    const auto& sc = cfg_.scenario;
    const auto& fs = *report_.final_state;
    double truth = scenario_->volume();
    m["volume_truth_m3"] = truth;
    m["volume_estimate_m3"] = fs.volume;
    if (truth > 0) m["volume_error_pct"] = std::abs(fs.volume - truth) / truth * 100.0;
    // truth resampled onto the twin's observed cells
    const auto& grid = twin_->grid();
    const auto& spec = grid.grid();
    double observed_truth = 0.0;
    for (int iy = 0; iy < spec.height; ++iy) {
      for (int ix = 0; ix < spec.width; ++ix) {
        if (grid.count({ix, iy}) == 0) continue;
        observed_truth += spec.cell_size * spec.cell_size *
                          scenario_->terrain().height_at(spec.center_x(ix), spec.center_y(iy));
      }
    }
    m["volume_truth_observed_m3"] = observed_truth;
    if (observed_truth > 0) m["volume_error_resampled_pct"] = std::abs(fs.volume - observed_truth) / observed_truth * 100.0;
    m["volume_truth_increases"] = static_cast<double>(probe_.volume_increases);
    m["observed_fraction"] = fs.observed_fraction;
    m["pose_samples"] = static_cast<double>(probe_.samples);
    if (probe_.samples > 0) {
      m["pose_rms_error_m"] = std::sqrt(probe_.pose_sq / static_cast<double>(probe_.samples));
      m["yaw_rms_error_deg"] = rad_to_deg(std::sqrt(probe_.yaw_sq / static_cast<double>(probe_.samples)));
    }
    m["scans_ingested"] = static_cast<double>(twin_->counters().scans_ingested);
    m["scans_stale"] = static_cast<double>(twin_->counters().scans_stale);
    m["calibrations"] = static_cast<double>(twin_->counters().calibrations);
    if (probe_.calibration) {
      auto truth_mount = sc.rig.lidar_truth_mount();
      const auto& c = probe_.calibration->mount;
      m["calibration_roll_error_deg"] = std::abs(rad_to_deg(normalize_angle(c.roll - truth_mount.roll)));
      m["calibration_pitch_error_deg"] = std::abs(rad_to_deg(normalize_angle(c.pitch - truth_mount.pitch)));
      m["calibration_yaw_error_deg"] = std::abs(rad_to_deg(normalize_angle(c.yaw - truth_mount.yaw)));
      m["calibration_residual_m"] = probe_.calibration->residual_rms;
    }
    for (const auto& d : report_.drivers) {
      m[d.name + "_frames_ok"] = static_cast<double>(d.diagnostics.frames_ok);
      m[d.name + "_frames_dropped"] = static_cast<double>(d.diagnostics.frames_dropped);
      m[d.name + "_resyncs"] = static_cast<double>(d.diagnostics.resyncs);
      m[d.name + "_reconnects"] = static_cast<double>(d.diagnostics.reconnects);
    }
  }

  const RunConfig& cfg_;
  const ReplayInput* replay_;
  RunOptions opt_;
  VirtualClock clock_;
  TransportContext ctx_;
  Bus bus_;
  RunReport report_;
  std::string stage_ = "setup";
  Fnv1a64 hash_;
  SubscriptionId hash_sub_ = 0, state_sub_ = 0, calib_sub_ = 0;
  Publisher command_pub_;
  std::unique_ptr<replay::Recorder> recorder_;
  std::uint16_t raw_ch_[3] = {0, 0, 0};
  std::unique_ptr<Scenario> scenario_;
  std::unique_ptr<Twin> twin_;
  std::vector<std::unique_ptr<Emulator>> emulators_;
  std::vector<std::unique_ptr<Driver>> drivers_;
  std::vector<ScheduledCommand> commands_;
  std::size_t next_command_ = 0;
  TimerId timer_ = 0;
  std::uint64_t ticks_total_ = 0;
  std::uint64_t ticks_done_ = 0;
  std::vector<Bytes> twin_states_;
  TruthProbe probe_;
};

}  // namespace detail

/// Live run: scenario truth feeds the emulators.
inline RunResult run_scenario(const RunConfig& cfg, const RunOptions& opt = {}) {
  return detail::Pipeline(cfg, nullptr, opt).run();
}

/// Re-drives the drivers and twin from recorded device bytes and compares
/// the twin/state stream with the recorded one.
inline RunResult replay_recording(const RunConfig& cfg, const ReplayInput& input, const RunOptions& opt = {}) {
  return detail::Pipeline(cfg, &input, opt).run();
}

}  // namespace dtp::harness
