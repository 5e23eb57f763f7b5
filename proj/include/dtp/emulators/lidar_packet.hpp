#pragma once

#include "dtp/emulators/crc.hpp"
#include "dtp/core/messages.hpp"

namespace dtp::lidar {

inline constexpr std::uint8_t kMagic[4] = {0x4C, 0x44, 0x54, 0x50};  // "LDTP"
/// scan_id(4) + t_ns(8) + start(4) + incr(4) + count(2)
inline constexpr std::size_t kHeaderSize = 22;
inline constexpr std::size_t kMaxPacketSize = 4 + kHeaderSize + 2 * kMaxLidarBeams + 2;

inline constexpr const char* kInfoReply = "OK DTP-LIDAR-1 fw=1.0\n";
inline constexpr const char* kUnknownReply = "ERR unknown\n";

inline void validate(const LidarScan& s) {
  if (s.increment_urad == 0) throw EncodeError("scan increment must be positive");
  if (s.ranges_mm.empty() || s.ranges_mm.size() > kMaxLidarBeams) {
    throw EncodeError("beam count must be within [1, 3600]");
  }
}

/// LDTP | scan_id | t_ns | start_urad | incr_urad | count | ranges | crc16 (over scan_id..ranges)
inline Bytes encode_packet(const LidarScan& s) {
  validate(s);
  Bytes out;
  out.reserve(4 + kHeaderSize + 2 * s.ranges_mm.size() + 2);
  ByteWriter w(out);
  for (auto b : kMagic) w.put(b);
  w.put(s.scan_id);
  w.put(s.time.ns);
  w.put(s.start_angle_urad);
  w.put(s.increment_urad);
  w.put(static_cast<std::uint16_t>(s.ranges_mm.size()));
  for (auto r : s.ranges_mm) w.put(r);
  w.put(crc16_ccitt_false(ByteView(out).subspan(4)));
  return out;
}

}  // namespace dtp::lidar
