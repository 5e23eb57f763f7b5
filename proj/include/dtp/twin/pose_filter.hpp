#pragma once

#include <optional>

#include "dtp/core/geo.hpp"
#include "dtp/core/geometry.hpp"
#include "dtp/core/messages.hpp"

namespace dtp {

struct PoseEstimate {
  Timestamp t;
  Vec3 position = Vec3::Zero();  // ENU, vehicle reference point
  double yaw = 0.0;
  double position_sigma = 0.0;
  double yaw_sigma = 0.0;
  double speed = 0.0;
  bool degraded = true;

  Pose3D pose() const { return RigidTransform::from(position, yaw); }

  bool operator==(const PoseEstimate&) const = default;
};

struct FilterParams {
  double alpha = 0.1;    // course correction gain per fix
  double beta = 0.3;     // position smoothing gain per fix
  double v_min = 0.3;    // m/s, course gating
  double gps_timeout = 1.0;  // s without a fix before degraded
  double base_position_sigma = 0.1;
  double position_sigma_growth = 1.0;  // m/s while degraded
  double base_yaw_sigma = 0.01;
  double yaw_sigma_growth = 0.01;  // rad/s since last course correction

  void validate() const {
    if (!(alpha > 0 && alpha <= 1) || !(beta > 0 && beta <= 1)) throw ValidationError("filter gains must be in (0, 1]");
    if (v_min < 0 || !(gps_timeout > 0)) throw ValidationError("invalid filter gating parameters");
  }
};

/// Complementary filter: yaw integrates the gyro and is pulled toward the
/// GPS course; horizontal position is dead-reckoned between fixes and
/// blended toward each fix. Altitude follows the fix directly.
class PoseFilter {
 public:
  PoseFilter(GeoCoordinate origin, FilterParams params = {}, Vec3 antenna_offset = Vec3::Zero())
      : origin_(origin), p_(params), antenna_(antenna_offset) {
    p_.validate();
  }

  bool initialized() const { return have_position_; }
  const FilterParams& params() const { return p_; }

  void on_imu(const ImuSample& s) {
    double gz = imu_gyro_si(s.gyro_ddps[2]);
    propagate(s.time);
    rate_ = gz;
  }

  void on_gps(const GpsFix& f) {
    propagate(f.time);
    if (f.quality != 1) return;
    Vec3 antenna = geo_to_enu(f.position, origin_);
    speed_ = f.speed_mps;
    if (speed_ > p_.v_min) {
      double course_yaw = normalize_angle(deg_to_rad(90.0 - f.course_deg));
      if (!have_yaw_) {
        est_.yaw = course_yaw;
        have_yaw_ = true;
      } else {
        est_.yaw = normalize_angle(est_.yaw + p_.alpha * normalize_angle(course_yaw - est_.yaw));
      }
      last_course_ = f.time;
    }
    Vec3 measured = antenna - RigidTransform::from(Vec3::Zero(), est_.yaw).apply(antenna_);
    if (!have_position_) {
      est_.position = measured;
      have_position_ = true;
    } else {
      est_.position.x() += p_.beta * (measured.x() - est_.position.x());
      est_.position.y() += p_.beta * (measured.y() - est_.position.y());
      est_.position.z() = measured.z();
    }
    last_fix_ = f.time;
    update_sigmas(f.time);
  }

  /// Current estimate advanced to `t` without changing filter state.
  PoseEstimate predict(Timestamp t) const {
    PoseEstimate e = est_;
    if (t > e.t) {
      double dt = to_seconds(t - e.t);
      double yaw_mid = e.yaw + 0.5 * rate_ * dt;
      e.position.x() += speed_ * std::cos(yaw_mid) * dt;
      e.position.y() += speed_ * std::sin(yaw_mid) * dt;
      e.yaw = normalize_angle(e.yaw + rate_ * dt);
      e.t = t;
    }
    e.speed = speed_;
    return e;
  }

  PoseEstimate estimate() const { return predict(est_.t); }

  void reset() { *this = PoseFilter(origin_, p_, antenna_); }

 private:
  void propagate(Timestamp t) {
    if (t <= est_.t) return;
    est_ = predict(t);
    update_sigmas(t);
  }

  void update_sigmas(Timestamp t) {
    double since_fix = last_fix_ ? to_seconds(t - *last_fix_) : 1e9;
    est_.degraded = !last_fix_ || since_fix > p_.gps_timeout;
    est_.position_sigma = p_.base_position_sigma;
    if (est_.degraded) est_.position_sigma += p_.position_sigma_growth * std::min(since_fix, 1e6);
    double since_course = last_course_ ? to_seconds(t - *last_course_) : 1e6;
    est_.yaw_sigma = p_.base_yaw_sigma + p_.yaw_sigma_growth * since_course;
    est_.speed = speed_;
  }

  GeoCoordinate origin_;
  FilterParams p_;
  Vec3 antenna_;
  PoseEstimate est_;
  double rate_ = 0.0;
  double speed_ = 0.0;
  bool have_position_ = false;
  bool have_yaw_ = false;
  std::optional<Timestamp> last_fix_;
  std::optional<Timestamp> last_course_;
};

}  // namespace dtp
