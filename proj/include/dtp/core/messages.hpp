#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "dtp/core/bytes.hpp"
#include "dtp/core/error.hpp"
#include "dtp/core/geo.hpp"
#include "dtp/core/time.hpp"

namespace dtp {

// Measurement types exchanged between devices, drivers and the twin. Bus
// payload layout is little-endian in declaration order.

struct GpsFix {
  Timestamp time;
  GeoCoordinate position;
  std::uint8_t quality = 0;     // 0 = no fix, 1 = fix
  std::uint8_t satellites = 0;
  double hdop = 0.0;
  double speed_mps = 0.0;       // speed over ground
  double course_deg = 0.0;      // course over ground, clockwise from north

  bool operator==(const GpsFix&) const = default;
};

/// IMU sample in wire units: accelerations in milli-g, rates in 0.1 deg/s.
struct ImuSample {
  Timestamp time;
  std::array<std::int16_t, 3> accel_mg{};
  std::array<std::int16_t, 3> gyro_ddps{};

  bool operator==(const ImuSample&) const = default;
};

inline constexpr double kStandardGravity = 9.80665;

namespace detail {

inline std::int16_t to_i16(double v, bool saturate) {
  double r = std::round(v);
  constexpr double lo = std::numeric_limits<std::int16_t>::min();
  constexpr double hi = std::numeric_limits<std::int16_t>::max();
  if (!std::isfinite(r) || r < lo || r > hi) {
    if (!saturate || std::isnan(r)) throw EncodeError("value does not fit a 16-bit IMU field");
    r = r < lo ? lo : hi;
  }
  return static_cast<std::int16_t>(r);
}

}  // namespace detail

/// Quantizes SI values (m/s^2, rad/s). Throws EncodeError on overflow unless
/// `saturate` clamps like a real sensor at full scale.
inline ImuSample imu_from_si(Timestamp t, const std::array<double, 3>& accel_mps2,
                             const std::array<double, 3>& gyro_rps, bool saturate = false) {
  ImuSample s;
  s.time = t;
  for (int i = 0; i < 3; ++i) {
    s.accel_mg[i] = detail::to_i16(accel_mps2[i] / kStandardGravity * 1000.0, saturate);
    s.gyro_ddps[i] = detail::to_i16(gyro_rps[i] * 180.0 / std::numbers::pi * 10.0, saturate);
  }
  return s;
}

inline double imu_accel_si(std::int16_t mg) { return mg * kStandardGravity / 1000.0; }
inline double imu_gyro_si(std::int16_t ddps) { return ddps / 10.0 * std::numbers::pi / 180.0; }

inline constexpr std::size_t kMaxLidarBeams = 3600;

/// One planar scan. Beam i points at start + i * increment (micro-radians);
/// ranges in millimetres, 0 = no return.
struct LidarScan {
  Timestamp time;
  std::uint32_t scan_id = 0;
  std::int32_t start_angle_urad = 0;
  std::uint32_t increment_urad = 0;
  std::vector<std::uint16_t> ranges_mm;

  double beam_angle(std::size_t i) const {
    return (static_cast<double>(start_angle_urad) + static_cast<double>(i) * increment_urad) * 1e-6;
  }

  bool operator==(const LidarScan&) const = default;
};

// --- bus payloads -----------------------------------------------------------

inline Bytes to_payload(const GpsFix& f) {
  ByteWriter w;
  w.put(f.time.ns);
  w.put_f64(f.position.latitude);
  w.put_f64(f.position.longitude);
  w.put_f64(f.position.altitude);
  w.put(f.quality);
  w.put(f.satellites);
  w.put_f64(f.hdop);
  w.put_f64(f.speed_mps);
  w.put_f64(f.course_deg);
  return w.take();
}

inline GpsFix gps_fix_from_payload(ByteView b) {
  ByteReader r(b);
  GpsFix f;
  f.time = Timestamp{r.get<std::uint64_t>()};
  f.position.latitude = r.get_f64();
  f.position.longitude = r.get_f64();
  f.position.altitude = r.get_f64();
  f.quality = r.get<std::uint8_t>();
  f.satellites = r.get<std::uint8_t>();
  f.hdop = r.get_f64();
  f.speed_mps = r.get_f64();
  f.course_deg = r.get_f64();
  return f;
}

inline Bytes to_payload(const ImuSample& s) {
  ByteWriter w;
  w.put(s.time.ns);
  for (auto v : s.accel_mg) w.put(v);
  for (auto v : s.gyro_ddps) w.put(v);
  return w.take();
}

inline ImuSample imu_sample_from_payload(ByteView b) {
  ByteReader r(b);
  ImuSample s;
  s.time = Timestamp{r.get<std::uint64_t>()};
  for (auto& v : s.accel_mg) v = r.get<std::int16_t>();
  for (auto& v : s.gyro_ddps) v = r.get<std::int16_t>();
  return s;
}

inline Bytes to_payload(const LidarScan& s) {
  ByteWriter w;
  w.put(s.time.ns);
  w.put(s.scan_id);
  w.put(s.start_angle_urad);
  w.put(s.increment_urad);
  w.put(static_cast<std::uint32_t>(s.ranges_mm.size()));
  for (auto v : s.ranges_mm) w.put(v);
  return w.take();
}

inline LidarScan lidar_scan_from_payload(ByteView b) {
  ByteReader r(b);
  LidarScan s;
  s.time = Timestamp{r.get<std::uint64_t>()};
  s.scan_id = r.get<std::uint32_t>();
  s.start_angle_urad = r.get<std::int32_t>();
  s.increment_urad = r.get<std::uint32_t>();
  auto n = r.get<std::uint32_t>();
  if (n > kMaxLidarBeams) throw DecodeError("scan payload beam count too large");
  s.ranges_mm.resize(n);
  for (auto& v : s.ranges_mm) v = r.get<std::uint16_t>();
  return s;
}

namespace kinds {
inline constexpr const char* kGpsFix = "gps_fix";
inline constexpr const char* kImuSample = "imu_sample";
inline constexpr const char* kLidarScan = "lidar_scan";
inline constexpr const char* kDiagnostics = "driver_diagnostics";
inline constexpr const char* kTwinState = "twin_state";
inline constexpr const char* kTwinCommand = "twin_command";
inline constexpr const char* kCalibration = "mount_calibration";
}  // namespace kinds

}  // namespace dtp
