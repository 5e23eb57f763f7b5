#pragma once

#include <cmath>
#include <vector>

#include "dtp/core/geometry.hpp"
#include "dtp/core/messages.hpp"
#include "dtp/twin/reconstruction.hpp"

namespace dtp {

struct CalibrationSample {
  LidarScan scan;
  Pose3D vehicle;
};

struct CalibrationParams {
  std::size_t min_scans = 30;
  /// Points below this height (after the current estimate) count as ground.
  double ground_band = 0.05;
  /// Points above this height belong to the vertical reference feature.
  double reference_min_z = 0.4;
  std::size_t min_reference_points = 50;
  double yaw_search = deg_to_rad(5.0);
  double max_residual = 0.02;  // m
  /// Straight-segment tolerance on vehicle heading.
  double max_heading_spread = deg_to_rad(1.0);
};

struct MountCalibration {
  RigidTransform mount;
  double residual_rms = 0.0;
  std::size_t ground_points = 0;
  std::size_t reference_points = 0;

  bool operator==(const MountCalibration&) const = default;
};

inline Bytes to_payload(const MountCalibration& c) {
  ByteWriter w;
  for (double v : {c.mount.translation.x(), c.mount.translation.y(), c.mount.translation.z(), c.mount.yaw, c.mount.pitch,
                   c.mount.roll, c.residual_rms}) {
    w.put_f64(v);
  }
  w.put(static_cast<std::uint64_t>(c.ground_points));
  w.put(static_cast<std::uint64_t>(c.reference_points));
  return w.take();
}

inline MountCalibration calibration_from_payload(ByteView p) {
  ByteReader r(p);
  MountCalibration c;
  c.mount.translation.x() = r.get_f64();
  c.mount.translation.y() = r.get_f64();
  c.mount.translation.z() = r.get_f64();
  c.mount.yaw = r.get_f64();
  c.mount.pitch = r.get_f64();
  c.mount.roll = r.get_f64();
  c.residual_rms = r.get_f64();
  c.ground_points = r.get<std::uint64_t>();
  c.reference_points = r.get<std::uint64_t>();
  return c;
}

namespace detail {

/// Sensor-frame beam endpoints of one scan with the vehicle pose levelled
/// onto the reference plane.
struct CalScan {
  std::vector<Vec3> sensor_points;
  Pose3D vehicle;
};

inline std::vector<Vec3> world_points(const CalScan& s, const RigidTransform& mount) {
  std::vector<Vec3> out;
  out.reserve(s.sensor_points.size());
  const Mat3 r = s.vehicle.rotation() * mount.rotation();
  const Vec3 t = s.vehicle.apply(mount.translation);
  for (const auto& p : s.sensor_points) out.push_back(t + r * p);
  return out;
}

}  // namespace detail

/// Estimates the LiDAR mount angles from scans over flat ground at z = 0
/// that include a straight pass along a vertical reference face.
///
/// Roll and pitch come from a least-squares fit of ground points to the
/// plane; yaw minimises the within-scan cross-track spread of points on the
/// reference face. Pitch is only observable when the nominal scan plane is
/// tilted about the vehicle y axis.
inline MountCalibration calibrate_mount(const std::vector<CalibrationSample>& samples, const RigidTransform& nominal,
                                        const CalibrationParams& p = {}) {
  if (samples.size() < p.min_scans) {
    throw CalibrationError("calibration needs at least " + std::to_string(p.min_scans) + " scans, got " +
                           std::to_string(samples.size()));
  }
  if (std::abs(std::sin(nominal.pitch)) < 0.05) {
    throw CalibrationError("mount pitch is unobservable with an untilted scan plane");
  }
  std::vector<detail::CalScan> scans;
  double heading = 0.0;
  {
    double sx = 0, sy = 0;
    for (const auto& s : samples) {
      sx += std::cos(s.vehicle.yaw);
      sy += std::sin(s.vehicle.yaw);
    }
    heading = std::atan2(sy, sx);
  }
  for (const auto& s : samples) {
    if (std::abs(normalize_angle(s.vehicle.yaw - heading)) > p.max_heading_spread) {
      throw CalibrationError("calibration drive is not a straight segment");
    }
    detail::CalScan c;
    c.vehicle = RigidTransform::from({s.vehicle.translation.x(), s.vehicle.translation.y(), 0.0}, s.vehicle.yaw);
    for (std::size_t i = 0; i < s.scan.ranges_mm.size(); ++i) {
      if (s.scan.ranges_mm[i] == 0) continue;
      double a = s.scan.beam_angle(i);
      c.sensor_points.push_back(Vec3{0.0, std::cos(a), std::sin(a)} * (s.scan.ranges_mm[i] / 1000.0));
    }
    scans.push_back(std::move(c));
  }

  RigidTransform est = nominal;
  auto mount_with = [&](double roll, double pitch, double yaw) {
    return RigidTransform::from(nominal.translation, yaw, pitch, roll);
  };

  // Gauss-Newton on ground residuals over (roll, pitch); the selection band
  // narrows as the estimate improves.
  std::size_t n_ground = 0;
  double rms = 0.0;
  for (double band : {0.5, 0.2, p.ground_band, p.ground_band}) {
    for (int iter = 0; iter < 8; ++iter) {
      const double h = 1e-6;
      Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
      Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
      double ss = 0.0;
      n_ground = 0;
      auto m0 = mount_with(est.roll, est.pitch, est.yaw);
      auto mr = mount_with(est.roll + h, est.pitch, est.yaw);
      auto mp = mount_with(est.roll, est.pitch + h, est.yaw);
      for (const auto& s : scans) {
        auto z0 = detail::world_points(s, m0);
        auto zr = detail::world_points(s, mr);
        auto zp = detail::world_points(s, mp);
        for (std::size_t i = 0; i < z0.size(); ++i) {
          double r = z0[i].z();
          if (std::abs(r) > band) continue;
          Eigen::Vector2d j{(zr[i].z() - r) / h, (zp[i].z() - r) / h};
          jtj += j * j.transpose();
          jtr += j * r;
          ss += r * r;
          ++n_ground;
        }
      }
      if (n_ground < 100) throw CalibrationError("too few ground points for calibration");
      rms = std::sqrt(ss / static_cast<double>(n_ground));
      if (std::abs(jtj.determinant()) < 1e-12) throw CalibrationError("roll/pitch not observable from the ground points");
      Eigen::Vector2d delta = jtj.ldlt().solve(-jtr);
      est.roll += delta[0];
      est.pitch += delta[1];
      if (delta.norm() < 1e-10) break;
    }
  }
  if (rms > p.max_residual) {
    throw CalibrationError("ground residual " + std::to_string(rms) + " m exceeds flatness threshold");
  }

  // Yaw: golden-section search on within-scan cross-track variance.
  const double cx = -std::sin(heading), cy = std::cos(heading);
  std::size_t n_ref = 0;
  auto spread = [&](double yaw, std::size_t* count) {
    auto m = mount_with(est.roll, est.pitch, yaw);
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : scans) {
      double sum = 0, sum2 = 0;
      std::size_t k = 0;
      for (const auto& q : detail::world_points(s, m)) {
        if (q.z() < p.reference_min_z) continue;
        double c = cx * q.x() + cy * q.y();
        sum += c;
        sum2 += c * c;
        ++k;
      }
      if (k >= 2) {
        total += sum2 - sum * sum / static_cast<double>(k);
        n += k;
      }
    }
    if (count) *count = n;
    return total;
  };
  spread(nominal.yaw, &n_ref);
  if (n_ref < p.min_reference_points) throw CalibrationError("no vertical reference feature seen during calibration");
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = nominal.yaw - p.yaw_search, b = nominal.yaw + p.yaw_search;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = spread(c, nullptr), fd = spread(d, nullptr);
  while (b - a > 1e-7) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = spread(c, nullptr);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = spread(d, nullptr);
    }
  }
  est.yaw = normalize_angle(0.5 * (a + b));
  spread(est.yaw, &n_ref);

  MountCalibration out;
  out.mount = RigidTransform::from(nominal.translation, est.yaw, est.pitch, est.roll);
  out.residual_rms = rms;
  out.ground_points = n_ground;
  out.reference_points = n_ref;
  return out;
}

}  // namespace dtp
