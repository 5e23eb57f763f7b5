#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "dtp/core/error.hpp"

namespace dtp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

constexpr double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Rotation from intrinsic yaw (z), then pitch (y'), then roll (x''):
/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

struct EulerAngles {
  double yaw = 0, pitch = 0, roll = 0;
};

inline EulerAngles euler_from_rotation(const Mat3& r) {
  EulerAngles e;
  double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  e.pitch = std::asin(sp);
  if (std::abs(std::cos(e.pitch)) > 1e-9) {
    e.yaw = std::atan2(r(1, 0), r(0, 0));
    e.roll = std::atan2(r(2, 1), r(2, 2));
  } else {
    // gimbal lock: fold roll into yaw
    e.roll = 0.0;
    e.yaw = std::atan2(-r(0, 1), r(1, 1));
  }
  e.yaw = normalize_angle(e.yaw);
  e.roll = normalize_angle(e.roll);
  return e;
}

/// Rigid body transform in the local ENU frame. Rotation first, then translation.
struct RigidTransform {
  Vec3 translation = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  static RigidTransform identity() { return {}; }

  static RigidTransform from(const Vec3& t, double yaw, double pitch = 0.0, double roll = 0.0) {
    return RigidTransform{t, normalize_angle(yaw), normalize_angle(pitch), normalize_angle(roll)};
  }

  static RigidTransform from_matrix(const Mat3& r, const Vec3& t) {
    auto e = euler_from_rotation(r);
    return RigidTransform{t, e.yaw, e.pitch, e.roll};
  }

  Mat3 rotation() const { return rotation_from_euler(yaw, pitch, roll); }

  Vec3 apply(const Vec3& p) const { return rotation() * p + translation; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation().transpose();
    return from_matrix(rt, -(rt * translation));
  }
};

using Pose3D = RigidTransform;

inline Vec3 transform_point(const RigidTransform& t, const Vec3& p) { return t.apply(p); }

/// compose(a, b) applied to p equals a(b(p)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  Mat3 ra = a.rotation();
  return RigidTransform::from_matrix(ra * b.rotation(), ra * b.translation + a.translation);
}

}  // namespace dtp
