#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dtp/core/geometry.hpp"
#include "dtp/core/grid.hpp"
#include "dtp/scenario/heightfield.hpp"

namespace dtp {

struct VehicleParams {
  double wheelbase = 3.0;
  double max_steer = 0.6;   // rad
  double max_accel = 1.0;   // m/s^2
  Footprint footprint;

  void validate() const {
    if (!(wheelbase > 0.0)) throw ValidationError("wheelbase must be positive");
    if (!(max_steer > 0.0 && max_steer < kPi / 2)) throw ValidationError("max_steer must be in (0, pi/2)");
    if (!(max_accel > 0.0)) throw ValidationError("max_accel must be positive");
  }
};

/// Reference point is the rear axle centre; z follows the terrain under it.
struct TractorState {
  Pose3D pose;
  double speed = 0.0;
  double steering_angle = 0.0;
  double wheelbase = 3.0;
  Footprint footprint;

  double yaw_rate() const { return speed / wheelbase * std::tan(steering_angle); }
};

struct Controls {
  double speed = 0.0;
  double steering_angle = 0.0;
};

/// Kinematic bicycle step with explicit Euler integration.
inline TractorState step(const TractorState& s, const Controls& u, double dt, const HeightField* terrain = nullptr) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  TractorState n = s;
  n.speed = u.speed;
  n.steering_angle = u.steering_angle;
  double th = s.pose.yaw;
  n.pose.translation.x() += n.speed * std::cos(th) * dt;
  n.pose.translation.y() += n.speed * std::sin(th) * dt;
  n.pose.yaw = normalize_angle(th + n.yaw_rate() * dt);
  if (terrain) n.pose.translation.z() = terrain->height_at(n.pose.translation.x(), n.pose.translation.y());
  return n;
}

struct Waypoint {
  double x = 0.0;
  double y = 0.0;
  double speed = 1.0;
};

/// Pure-pursuit tracker over a polyline of waypoints. Stops at the last one.
class WaypointFollower {
 public:
  WaypointFollower() = default;
  WaypointFollower(std::vector<Waypoint> wps, VehicleParams params, double lookahead = 3.0)
      : wps_(std::move(wps)), params_(params), lookahead_(lookahead) {
    if (wps_.empty()) throw ValidationError("waypoint list must not be empty");
    if (!(lookahead_ > 0.0)) throw ValidationError("lookahead must be positive");
  }

  bool finished() const { return finished_; }
  std::size_t segment() const { return seg_; }

  Controls control(const TractorState& s, double dt) {
    Controls u;
    if (finished_ || wps_.size() < 2) {
      finished_ = true;
      u.speed = ramp(s.speed, 0.0, dt);
      return u;
    }
    const double px = s.pose.translation.x(), py = s.pose.translation.y();
    // advance past segments whose end has been passed
    while (seg_ + 1 < wps_.size()) {
      const auto &a = wps_[seg_], &b = wps_[seg_ + 1];
      double sx = b.x - a.x, sy = b.y - a.y;
      double len2 = sx * sx + sy * sy;
      double proj = len2 > 0 ? ((px - a.x) * sx + (py - a.y) * sy) / len2 : 1.0;
      if (proj < 1.0) break;
      ++seg_;
    }
    if (seg_ + 1 >= wps_.size()) {
      finished_ = true;
      u.speed = ramp(s.speed, 0.0, dt);
      return u;
    }
    auto target = lookahead_point(px, py);
    double dx = target[0] - px, dy = target[1] - py;
    double alpha = normalize_angle(std::atan2(dy, dx) - s.pose.yaw);
    double ld = std::max(std::hypot(dx, dy), 1e-6);
    double steer = std::atan(2.0 * params_.wheelbase * std::sin(alpha) / ld);
    u.steering_angle = std::clamp(steer, -params_.max_steer, params_.max_steer);
    u.speed = ramp(s.speed, wps_[seg_ + 1].speed, dt);
    return u;
  }

 private:
  double ramp(double v, double target, double dt) const {
    double dv = std::clamp(target - v, -params_.max_accel * dt, params_.max_accel * dt);
    return v + dv;
  }

  std::array<double, 2> lookahead_point(double px, double py) const {
    const auto &a = wps_[seg_], &b = wps_[seg_ + 1];
    double sx = b.x - a.x, sy = b.y - a.y;
    double len = std::hypot(sx, sy);
    double along = len > 0 ? ((px - a.x) * sx + (py - a.y) * sy) / len : 0.0;
    double remaining = lookahead_;
    double pos = std::max(0.0, along);
    std::size_t i = seg_;
    for (;;) {
      const auto &p = wps_[i], &q = wps_[i + 1];
      double l = std::hypot(q.x - p.x, q.y - p.y);
      if (pos + remaining <= l || i + 2 >= wps_.size()) {
        double t = l > 0 ? std::min(1.0, (pos + remaining) / l) : 1.0;
        return {p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t};
      }
      remaining -= std::max(0.0, l - pos);
      pos = 0.0;
      ++i;
    }
  }

  std::vector<Waypoint> wps_;
  VehicleParams params_;
  double lookahead_ = 3.0;
  std::size_t seg_ = 0;
  bool finished_ = false;
};

}  // namespace dtp
