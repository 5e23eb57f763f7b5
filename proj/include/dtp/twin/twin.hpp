#pragma once

#include <algorithm>
#include <deque>
#include <mutex>
#include <variant>

#include "dtp/core/bus.hpp"
#include "dtp/core/clock.hpp"
#include "dtp/twin/calibration.hpp"
#include "dtp/twin/pose_filter.hpp"
#include "dtp/twin/reconstruction.hpp"

namespace dtp {

struct TwinState {
  Timestamp t;
  PoseEstimate pose;
  double volume = 0.0;
  double observed_fraction = 0.0;
  std::vector<std::uint16_t> coverage;

  bool operator==(const TwinState&) const = default;
};

inline Bytes to_payload(const TwinState& s) {
  ByteWriter w;
  w.put(s.t.ns);
  w.put(s.pose.t.ns);
  for (double v : {s.pose.position.x(), s.pose.position.y(), s.pose.position.z(), s.pose.yaw, s.pose.position_sigma,
                   s.pose.yaw_sigma, s.pose.speed}) {
    w.put_f64(v);
  }
  w.put(static_cast<std::uint8_t>(s.pose.degraded));
  w.put_f64(s.volume);
  w.put_f64(s.observed_fraction);
  w.put(static_cast<std::uint32_t>(s.coverage.size()));
  for (auto c : s.coverage) w.put(c);
  return w.take();
}

inline TwinState twin_state_from_payload(ByteView p) {
  ByteReader r(p);
  TwinState s;
  s.t = Timestamp{r.get<std::uint64_t>()};
  s.pose.t = Timestamp{r.get<std::uint64_t>()};
  s.pose.position.x() = r.get_f64();
  s.pose.position.y() = r.get_f64();
  s.pose.position.z() = r.get_f64();
  s.pose.yaw = r.get_f64();
  s.pose.position_sigma = r.get_f64();
  s.pose.yaw_sigma = r.get_f64();
  s.pose.speed = r.get_f64();
  s.pose.degraded = r.get<std::uint8_t>() != 0;
  s.volume = r.get_f64();
  s.observed_fraction = r.get_f64();
  s.coverage.resize(r.get<std::uint32_t>());
  for (auto& c : s.coverage) c = r.get<std::uint16_t>();
  return s;
}

struct TwinConfig {
  GeoCoordinate origin;
  GridSpec grid;
  Footprint footprint;
  RigidTransform gps_mount;
  RigidTransform lidar_mount;
  FilterParams filter;
  CalibrationParams calibration;
  Duration scan_period = std::chrono::milliseconds(100);
  Duration publish_period = std::chrono::seconds(1);
  std::size_t calibration_buffer = 600;
};

struct TwinCounters {
  std::uint64_t scans_ingested = 0;
  std::uint64_t scans_stale = 0;
  std::uint64_t points_out_of_grid = 0;
  std::uint64_t calibrations = 0;
  std::uint64_t calibration_failures = 0;
};

/// Digital twin service. Consumes sensor topics only; all inputs pass
/// through one queue processed in measurement-time order on each tick.
class Twin {
 public:
  Twin(Bus& bus, const VirtualClock& clock, TwinConfig cfg)
      : bus_(bus), clock_(clock), cfg_(cfg), filter_(cfg.origin, cfg.filter, cfg.gps_mount.translation),
        grid_(cfg.grid), coverage_(cfg.grid, cfg.footprint), mount_(cfg.lidar_mount) {
    for (auto k : {kinds::kGpsFix, kinds::kImuSample, kinds::kLidarScan, kinds::kTwinState, kinds::kTwinCommand,
                   kinds::kCalibration}) {
      bus_.register_kind(k);
    }
    state_pub_ = bus_.advertise("twin/state", kinds::kTwinState);
    calib_pub_ = bus_.advertise("twin/calibration", kinds::kCalibration);
    subs_.push_back(bus_.subscribe("sensors/gps/fix", [this](const Envelope& e) { push(gps_fix_from_payload(e.payload)); }));
    subs_.push_back(bus_.subscribe("sensors/imu/sample", [this](const Envelope& e) { push(imu_sample_from_payload(e.payload)); }));
    subs_.push_back(bus_.subscribe("sensors/lidar/scan", [this](const Envelope& e) { push(lidar_scan_from_payload(e.payload)); }));
    subs_.push_back(bus_.subscribe("twin/command", [this](const Envelope& e) { push(Command{to_string(e.payload)}); }));
    next_publish_ = Timestamp{} + cfg_.publish_period;
  }

  ~Twin() {
    for (auto id : subs_) bus_.unsubscribe(id);
  }

  Twin(const Twin&) = delete;
  Twin& operator=(const Twin&) = delete;

  void on_tick(Timestamp now) {
    process();
    while (next_publish_ <= now) {
      state_pub_.publish(now, to_payload(state(now)));
      next_publish_ = next_publish_ + cfg_.publish_period;
    }
  }

  TwinState state(Timestamp now) const {
    TwinState s;
    s.t = now;
    s.pose = filter_.estimate();
    auto v = estimate_volume(grid_);
    s.volume = v.volume;
    s.observed_fraction = v.observed_fraction;
    s.coverage = coverage_.passes();
    return s;
  }

  const ReconstructionGrid& grid() const { return grid_; }
  const PoseFilter& filter() const { return filter_; }
  const RigidTransform& lidar_mount() const { return mount_; }
  const TwinCounters& counters() const { return counters_; }
  const std::optional<MountCalibration>& last_calibration() const { return calibration_; }
  const std::string& last_error() const { return last_error_; }

  void reset() {
    filter_.reset();
    grid_.clear();
    coverage_.clear();
    cal_samples_.clear();
  }

 private:
  struct Command {
    std::string text;
  };
  using Item = std::variant<GpsFix, ImuSample, LidarScan, Command>;

  struct Queued {
    Timestamp t;
    int rank;
    std::uint64_t order;
    Item item;
  };

  void push(Item item) {
    std::lock_guard lock(mu_);
    Timestamp t = std::visit(
        [&](const auto& v) -> Timestamp {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Command>) {
            return clock_.now();
          } else {
            return v.time;
          }
        },
        item);
    int rank = static_cast<int>(item.index() == 2 ? 1 : item.index() == 3 ? 2 : 0);
    queue_.push_back({t, rank, seq_++, std::move(item)});
  }

  void process() {
    std::vector<Queued> batch;
    {
      std::lock_guard lock(mu_);
      batch.assign(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
      queue_.clear();
    }
    std::stable_sort(batch.begin(), batch.end(), [](const Queued& a, const Queued& b) {
      return std::tie(a.t, a.rank, a.order) < std::tie(b.t, b.rank, b.order);
    });
    for (auto& q : batch) {
      std::visit([this](auto& v) { handle(v); }, q.item);
    }
  }

  void handle(const GpsFix& f) { filter_.on_gps(f); }

  void handle(const ImuSample& s) {
    filter_.on_imu(s);
    if (filter_.initialized()) coverage_.update(filter_.estimate().pose());
  }

  void handle(const LidarScan& scan) {
    auto est = filter_.estimate();
    if (!filter_.initialized() || scan.time > est.t + cfg_.scan_period || est.t > scan.time + cfg_.scan_period) {
      ++counters_.scans_stale;
      return;
    }
    auto pose = filter_.predict(scan.time);
    auto before = grid_.skipped();
    update_surface(grid_, scan_to_points(scan, pose.pose(), mount_));
    counters_.points_out_of_grid += grid_.skipped() - before;
    ++counters_.scans_ingested;
    cal_samples_.push_back({scan, pose.pose()});
    if (cal_samples_.size() > cfg_.calibration_buffer) cal_samples_.pop_front();
  }

  void handle(const Command& c) {
    if (c.text == "reset") {
      reset();
    } else if (c.text == "calibrate") {
      try {
        std::vector<CalibrationSample> samples(cal_samples_.begin(), cal_samples_.end());
        calibration_ = calibrate_mount(samples, cfg_.lidar_mount, cfg_.calibration);
        mount_ = calibration_->mount;
        ++counters_.calibrations;
        calib_pub_.publish(clock_.now(), to_payload(*calibration_));
      } catch (const CalibrationError& e) {
        ++counters_.calibration_failures;
        last_error_ = e.what();
      }
    } else {
      last_error_ = "unknown command: " + c.text;
    }
  }

  Bus& bus_;
  const VirtualClock& clock_;
  TwinConfig cfg_;
  PoseFilter filter_;
  ReconstructionGrid grid_;
  CoverageMap coverage_;
  RigidTransform mount_;
  Publisher state_pub_;
  Publisher calib_pub_;
  std::vector<SubscriptionId> subs_;
  std::mutex mu_;
  std::vector<Queued> queue_;
  std::uint64_t seq_ = 0;
  Timestamp next_publish_{};
  std::deque<CalibrationSample> cal_samples_;
  std::optional<MountCalibration> calibration_;
  TwinCounters counters_;
  std::string last_error_;
};

}  // namespace dtp
