#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "dtp/emulators/crc.hpp"
#include "dtp/core/messages.hpp"

namespace dtp::nmea {

inline std::string checksum_hex(std::string_view body) {
  char buf[3];
  std::snprintf(buf, sizeof buf, "%02X",
                nmea_xor(ByteView(reinterpret_cast<const std::uint8_t*>(body.data()), body.size())));
  return buf;
}

/// `$<body>*CS\r\n`
inline std::string frame(std::string_view body) {
  std::string s;
  s.reserve(body.size() + 6);
  s += '$';
  s += body;
  s += '*';
  s += checksum_hex(body);
  s += "\r\n";
  return s;
}

/// `ddmm.mmmm,N` (lat, 2 degree digits) or `dddmm.mmmm,E` (lon, 3 digits).
inline std::string format_angle(double deg, bool is_lat) {
  double limit = is_lat ? 90.0 : 180.0;
  if (!std::isfinite(deg) || std::abs(deg) > limit) {
    throw EncodeError(std::string(is_lat ? "latitude" : "longitude") + " out of range");
  }
  // integer units of 1e-4 arcminute avoid a 60.0000 minutes carry bug
  auto units = static_cast<long long>(std::llround(std::abs(deg) * 600000.0));
  long long whole = units / 600000;
  long long rem = units % 600000;
  char hemi = is_lat ? (deg < 0 ? 'S' : 'N') : (deg < 0 ? 'W' : 'E');
  char buf[32];
  std::snprintf(buf, sizeof buf, is_lat ? "%02lld%02lld.%04lld,%c" : "%03lld%02lld.%04lld,%c", whole,
                rem / 10000, rem % 10000, hemi);
  return buf;
}

inline std::string format_time(Timestamp t) {
  std::uint64_t cs = t.ns / 10'000'000ULL;  // centiseconds
  std::uint64_t day_cs = cs % (24ULL * 3600ULL * 100ULL);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02llu%02llu%02llu.%02llu",
                static_cast<unsigned long long>(day_cs / 360000), static_cast<unsigned long long>(day_cs / 6000 % 60),
                static_cast<unsigned long long>(day_cs / 100 % 60), static_cast<unsigned long long>(day_cs % 100));
  return buf;
}

inline void validate(const GpsFix& f) {
  try {
    dtp::validate(f.position);
  } catch (const ValidationError& e) {
    throw EncodeError(e.what());
  }
  if (f.quality > 1) throw EncodeError("fix quality must be 0 or 1");
  if (f.satellites > 99) throw EncodeError("satellite count exceeds two digits");
  if (!(f.hdop >= 0.0 && f.hdop < 100.0) || (f.quality == 1 && f.hdop <= 0.0)) {
    throw EncodeError("hdop out of range");
  }
  if (!(f.speed_mps >= 0.0) || !std::isfinite(f.speed_mps)) throw EncodeError("speed out of range");
  if (!(f.course_deg >= 0.0 && f.course_deg < 360.0)) throw EncodeError("course out of range");
  if (std::abs(f.position.altitude) >= 1e5) throw EncodeError("altitude out of range");
}

inline constexpr double kKnotsPerMps = 3600.0 / 1852.0;

inline std::string encode_gga(const GpsFix& f) {
  validate(f);
  char tail[64];
  std::snprintf(tail, sizeof tail, ",%u,%02u,%.1f,%.1f,M,0.0,M,,", static_cast<unsigned>(f.quality),
                static_cast<unsigned>(f.satellites), f.hdop, f.position.altitude);
  return frame("GPGGA," + format_time(f.time) + "," + format_angle(f.position.latitude, true) + "," +
               format_angle(f.position.longitude, false) + tail);
}

/// `date` is the ddmmyy field; the fix itself carries time of day only.
inline std::string encode_rmc(const GpsFix& f, std::string_view date = "150123") {
  validate(f);
  char tail[64];
  std::snprintf(tail, sizeof tail, ",%.3f,%.2f,", f.speed_mps * kKnotsPerMps, f.course_deg);
  std::string body = "GPRMC," + format_time(f.time) + (f.quality == 1 ? ",A," : ",V,") +
                     format_angle(f.position.latitude, true) + "," + format_angle(f.position.longitude, false) +
                     tail + std::string(date) + ",,," + (f.quality == 1 ? "A" : "N");
  return frame(body);
}

/// One epoch as emitted by the receiver: GGA followed by RMC.
inline std::string encode(const GpsFix& f) { return encode_gga(f) + encode_rmc(f); }

}  // namespace dtp::nmea
