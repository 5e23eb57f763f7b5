#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtp/core/geo.hpp"
#include "dtp/core/messages.hpp"
#include "dtp/core/time.hpp"
#include "dtp/scenario/heightfield.hpp"
#include "dtp/scenario/vehicle.hpp"

namespace dtp {

struct NoiseModel {
  double gps_sigma = 0.0;        // m, horizontal
  double gyro_bias = 0.0;        // rad/s
  double gyro_sigma = 0.0;       // rad/s
  double lidar_sigma = 0.0;      // m
  double lidar_dropout = 0.0;    // probability per beam

  void validate() const {
    if (gps_sigma < 0 || gyro_sigma < 0 || lidar_sigma < 0) throw ValidationError("noise sigmas must be non-negative");
    if (lidar_dropout < 0 || lidar_dropout > 1) throw ValidationError("lidar dropout must be in [0, 1]");
  }

  bool is_zero() const {
    return gps_sigma == 0 && gyro_bias == 0 && gyro_sigma == 0 && lidar_sigma == 0 && lidar_dropout == 0;
  }
};

struct WorldBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double height = 0;
};

struct WorldConfig {
  GeoCoordinate origin{54.3233, 10.1228, 10.0};
  GridSpec grid{0.0, 0.0, 0.5, 20, 20};
  std::vector<WorldBox> boxes{{0.0, 0.0, 10.0, 10.0, 2.0}};
  /// Area the twin reconstructs and the harness scores.
  GridSpec heap_region{0.0, 0.0, 0.5, 20, 20};
  double min_height_fraction = 0.5;
};

struct SensorRig {
  RigidTransform gps_mount = RigidTransform::from({0.0, 0.0, 3.0}, 0.0);
  RigidTransform imu_mount;
  /// Nominal LiDAR mount, as known to the twin.
  RigidTransform lidar_mount = RigidTransform::from({1.0, 0.0, 3.0}, 0.0);
  /// Mount error present in the world but unknown to the twin (radians).
  EulerAngles lidar_mount_error;
  double gps_rate_hz = 10.0;
  double imu_rate_hz = 100.0;
  double lidar_rate_hz = 10.0;
  ScanGeometry lidar;

  RigidTransform lidar_truth_mount() const {
    return RigidTransform::from(lidar_mount.translation, lidar_mount.yaw + lidar_mount_error.yaw,
                                lidar_mount.pitch + lidar_mount_error.pitch, lidar_mount.roll + lidar_mount_error.roll);
  }
};

struct ScenarioConfig {
  std::string id = "scenario";
  std::uint64_t seed = 1;
  double tick_dt = 0.01;
  double duration = 60.0;
  std::vector<Waypoint> waypoints;
  double lookahead = 3.0;
  VehicleParams vehicle;
  WorldConfig world;
  double compaction_k = 0.7;
  NoiseModel noise;
  SensorRig rig;

  Duration tick() const { return seconds_to_duration(tick_dt); }

  void validate() const {
    if (!(tick_dt > 0.0)) throw ValidationError("tick_dt must be positive");
    if (tick().count() <= 0) throw ValidationError("tick_dt below clock resolution");
    if (duration < 0.0) throw ValidationError("duration must be non-negative");
    if (!(compaction_k > 0.0 && compaction_k <= 1.0)) throw ValidationError("compaction k must be in (0, 1]");
    if (world.min_height_fraction < 0.0 || world.min_height_fraction > 1.0) {
      throw ValidationError("min_height_fraction must be in [0, 1]");
    }
    world.grid.validate();
    world.heap_region.validate();
    dtp::validate(world.origin);
    vehicle.validate();
    noise.validate();
    rig.lidar.validate();
    for (double r : {rig.gps_rate_hz, rig.imu_rate_hz, rig.lidar_rate_hz}) {
      if (!(r > 0.0)) throw ValidationError("sensor rates must be positive");
      auto period = seconds_to_duration(1.0 / r);
      if (period.count() % tick().count() != 0) throw ValidationError("sensor periods must be multiples of tick_dt");
    }
  }
};

/// Noiseless sensor truth at one instant, in SI units.
struct GroundTruth {
  Timestamp time;
  GpsFix gps;
  Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  std::vector<double> lidar_ranges;  // m; no_return() for misses
};

inline double course_from_yaw(double yaw) {
  double c = 90.0 - rad_to_deg(yaw);
  c = std::fmod(c, 360.0);
  if (c < 0) c += 360.0;
  return c;
}

inline double yaw_from_course(double course_deg) { return normalize_angle(deg_to_rad(90.0 - course_deg)); }

/// Ground-truth world: tractor on a compactable heightfield, stepped at a
/// fixed tick.
class Scenario {
 public:
  explicit Scenario(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    terrain_ = HeightField(cfg_.world.grid);
    for (const auto& b : cfg_.world.boxes) {
      terrain_.add_box(b.x0, b.y0, b.x1, b.y1, b.height, cfg_.world.min_height_fraction);
    }
    passes_.assign(cfg_.world.grid.cell_count(), 0);
    state_.wheelbase = cfg_.vehicle.wheelbase;
    state_.footprint = cfg_.vehicle.footprint;
    if (!cfg_.waypoints.empty()) {
      const auto& a = cfg_.waypoints.front();
      double yaw = 0.0;
      if (cfg_.waypoints.size() > 1) {
        const auto& b = cfg_.waypoints[1];
        yaw = std::atan2(b.y - a.y, b.x - a.x);
      }
      state_.pose = RigidTransform::from({a.x, a.y, 0.0}, yaw);
      follower_ = WaypointFollower(cfg_.waypoints, cfg_.vehicle, cfg_.lookahead);
    }
    state_.pose.translation.z() = terrain_.height_at(state_.pose.translation.x(), state_.pose.translation.y());
    update_footprint();
  }

  const ScenarioConfig& config() const { return cfg_; }
  Timestamp now() const { return Timestamp{static_cast<std::uint64_t>(ticks_ * cfg_.tick().count())}; }
  const TractorState& state() const { return state_; }
  const HeightField& terrain() const { return terrain_; }
  const std::vector<int>& pass_counts() const { return passes_; }
  double volume() const { return ground_truth_volume(terrain_); }

  void tick() {
    const double dt = cfg_.tick_dt;
    prev_speed_ = state_.speed;
    Controls u = cfg_.waypoints.empty() ? Controls{} : follower_.control(state_, dt);
    state_ = step(state_, u, dt, &terrain_);
    ++ticks_;
    update_footprint();
  }

  /// Steps until now() >= t.
  void advance_to(Timestamp t) {
    while (now() < t) tick();
  }

  Pose3D mount_pose(const RigidTransform& mount) const { return compose(state_.pose, mount); }

  GpsFix truth_gps() const {
    GpsFix f;
    f.time = now();
    f.position = enu_to_geo(mount_pose(cfg_.rig.gps_mount).translation, cfg_.world.origin);
    f.quality = 1;
    f.satellites = 10;
    f.hdop = 0.8;
    f.speed_mps = std::abs(state_.speed);
    f.course_deg = course_from_yaw(state_.speed < 0 ? state_.pose.yaw + kPi : state_.pose.yaw);
    return f;
  }

  /// Body-frame specific force and angular rate at the rear axle. Vertical
  /// terrain motion is not differentiated.
  std::pair<Vec3, Vec3> truth_imu() const {
    double along = (state_.speed - prev_speed_) / cfg_.tick_dt;
    double omega = state_.yaw_rate();
    Vec3 accel{along, state_.speed * omega, kStandardGravity};
    Vec3 gyro{0.0, 0.0, omega};
    Mat3 r = cfg_.rig.imu_mount.rotation().transpose();
    return {r * accel, r * gyro};
  }

  std::vector<double> truth_lidar(const ScanGeometry& g) const {
    return raycast_scan(terrain_, mount_pose(cfg_.rig.lidar_truth_mount()), g);
  }

  GroundTruth sample_ground_truth(Timestamp t) const {
    if (t != now()) throw ValidationError("ground truth is only available at the current scenario time");
    GroundTruth g;
    g.time = t;
    g.gps = truth_gps();
    std::tie(g.accel, g.gyro) = truth_imu();
    g.lidar_ranges = truth_lidar(cfg_.rig.lidar);
    return g;
  }

 private:
  void update_footprint() {
    const auto& p = state_.pose;
    auto cells = footprint_cells(cfg_.world.grid, p.translation.x(), p.translation.y(), p.yaw, state_.footprint);
    auto entered = tracker_.update(std::move(cells));
    for (auto c : entered) ++passes_[cfg_.world.grid.index(c)];
    apply_compaction(terrain_, entered, cfg_.compaction_k);
  }

  ScenarioConfig cfg_;
  HeightField terrain_;
  TractorState state_;
  WaypointFollower follower_;
  FootprintTracker tracker_;
  std::vector<int> passes_;
  std::uint64_t ticks_ = 0;
  double prev_speed_ = 0.0;
};

}  // namespace dtp
