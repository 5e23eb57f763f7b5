#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dtp/emulators/crc.hpp"
#include "dtp/core/messages.hpp"

namespace dtp::nmea {

struct GgaData {
  Timestamp time;
  GeoCoordinate position;
  std::uint8_t quality = 0;
  std::uint8_t satellites = 0;
  double hdop = 0.0;
};

struct RmcData {
  Timestamp time;
  bool valid = false;
  GeoCoordinate position;
  double speed_mps = 0.0;
  double course_deg = 0.0;
};

enum class LineStatus {
  Ok,
  Dropped,  // framing, checksum or field error
  Unknown,  // well-formed sentence of a type we do not consume
};

struct ParsedLine {
  LineStatus status = LineStatus::Dropped;
  std::variant<std::monostate, GgaData, RmcData> data;
  std::string error;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = s.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

template <typename T>
bool parse_uint(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline bool parse_time(std::string_view s, Timestamp& out) {
  // hhmmss.ss
  if (s.size() != 9 || s[6] != '.') return false;
  unsigned hh, mm, ss, cc;
  if (!parse_uint(s.substr(0, 2), hh) || !parse_uint(s.substr(2, 2), mm) || !parse_uint(s.substr(4, 2), ss) ||
      !parse_uint(s.substr(7, 2), cc) || hh > 23 || mm > 59 || ss > 59) {
    return false;
  }
  std::uint64_t centis = ((hh * 60ULL + mm) * 60ULL + ss) * 100ULL + cc;
  out = Timestamp{centis * 10'000'000ULL};
  return true;
}

inline bool parse_angle(std::string_view value, std::string_view hemi, bool is_lat, double& out) {
  std::size_t deg_digits = is_lat ? 2 : 3;
  if (value.size() != deg_digits + 7 || value[deg_digits + 2] != '.') return false;
  unsigned deg, min_whole, min_frac;
  if (!parse_uint(value.substr(0, deg_digits), deg) || !parse_uint(value.substr(deg_digits, 2), min_whole) ||
      !parse_uint(value.substr(deg_digits + 3, 4), min_frac) || min_whole > 59) {
    return false;
  }
  double v = deg + (min_whole + min_frac * 1e-4) / 60.0;
  if (v > (is_lat ? 90.0 : 180.0)) return false;
  if (is_lat ? hemi == "S" : hemi == "W") {
    v = -v;
  } else if (hemi != (is_lat ? "N" : "E")) {
    return false;
  }
  out = v;
  return true;
}

inline ParsedLine dropped(std::string why) {
  ParsedLine p;
  p.status = LineStatus::Dropped;
  p.error = std::move(why);
  return p;
}

}  // namespace detail

/// Parses one line as delimited by '\n' (the '\n' itself excluded).
inline ParsedLine parse_line(std::string_view line) {
  using namespace detail;
  if (line.empty() || line.back() != '\r') return dropped("missing CR LF terminator");
  line.remove_suffix(1);
  if (line.size() < 4 || line.front() != '$') return dropped("missing '$' start");
  auto star = line.rfind('*');
  if (star == std::string_view::npos || star + 3 != line.size()) return dropped("missing checksum");
  auto body = line.substr(1, star - 1);
  int hi = hex_value(line[star + 1]), lo = hex_value(line[star + 2]);
  if (hi < 0 || lo < 0) return dropped("malformed checksum digits");
  auto expected = static_cast<std::uint8_t>(hi * 16 + lo);
  if (nmea_xor(ByteView(reinterpret_cast<const std::uint8_t*>(body.data()), body.size())) != expected) {
    return dropped("checksum mismatch");
  }
  if (body.find('$') != std::string_view::npos || body.find('*') != std::string_view::npos) {
    return dropped("reserved character in sentence body");
  }
  auto f = split_fields(body);
  ParsedLine out;
  if (f[0] == "GPGGA") {
    if (f.size() != 15) return dropped("GGA field count");
    GgaData g;
    unsigned q = 0, sats = 0;
    if (!parse_time(f[1], g.time) || !parse_angle(f[2], f[3], true, g.position.latitude) ||
        !parse_angle(f[4], f[5], false, g.position.longitude) || !parse_uint(f[6], q) || q > 1 ||
        !parse_uint(f[7], sats) || sats > 99 || !parse_double(f[8], g.hdop) ||
        !parse_double(f[9], g.position.altitude) || f[10] != "M") {
      return dropped("GGA field error");
    }
    g.quality = static_cast<std::uint8_t>(q);
    g.satellites = static_cast<std::uint8_t>(sats);
    out.data = g;
  } else if (f[0] == "GPRMC") {
    if (f.size() != 13) return dropped("RMC field count");
    RmcData r;
    double knots = 0;
    if (!parse_time(f[1], r.time) || (f[2] != "A" && f[2] != "V") ||
        !parse_angle(f[3], f[4], true, r.position.latitude) ||
        !parse_angle(f[5], f[6], false, r.position.longitude) || !parse_double(f[7], knots) ||
        !parse_double(f[8], r.course_deg)) {
      return dropped("RMC field error");
    }
    r.valid = f[2] == "A";
    r.speed_mps = knots * 1852.0 / 3600.0;
    out.data = r;
  } else {
    out.status = LineStatus::Unknown;
    return out;
  }
  out.status = LineStatus::Ok;
  return out;
}

/// Pairs GGA and RMC of the same epoch into a fix. An epoch missing either
/// sentence yields nothing.
class FixAssembler {
 public:
  std::optional<GpsFix> push(const ParsedLine& line) {
    if (auto g = std::get_if<GgaData>(&line.data)) {
      pending_ = *g;
      return std::nullopt;
    }
    if (auto r = std::get_if<RmcData>(&line.data)) {
      if (!pending_ || pending_->time != r->time) {
        pending_.reset();
        return std::nullopt;
      }
      GpsFix fix;
      fix.time = pending_->time;
      fix.position = pending_->position;
      fix.quality = pending_->quality;
      fix.satellites = pending_->satellites;
      fix.hdop = pending_->hdop;
      fix.speed_mps = r->speed_mps;
      fix.course_deg = r->course_deg;
      pending_.reset();
      return fix;
    }
    return std::nullopt;
  }

  void reset() { pending_.reset(); }

 private:
  std::optional<GgaData> pending_;
};

/// Splits a byte stream into '\n'-terminated lines. Lines longer than
/// `max_line` are discarded whole and reported as overflows.
class LineSplitter {
 public:
  explicit LineSplitter(std::size_t max_line = 256) : max_line_(max_line) {}

  template <typename OnLine, typename OnOverflow>
  void feed(ByteView data, OnLine&& on_line, OnOverflow&& on_overflow) {
    for (auto b : data) {
      if (b == '\n') {
        if (overflow_) {
          on_overflow();
        } else if (!buf_.empty()) {
          on_line(std::string_view(buf_));
        }
        buf_.clear();
        overflow_ = false;
        continue;
      }
      if (overflow_) continue;
      if (buf_.size() >= max_line_) {
        overflow_ = true;
        buf_.clear();
        continue;
      }
      buf_.push_back(static_cast<char>(b));
    }
  }

  void reset() {
    buf_.clear();
    overflow_ = false;
  }

 private:
  std::size_t max_line_;
  std::string buf_;
  bool overflow_ = false;
};

}  // namespace dtp::nmea
