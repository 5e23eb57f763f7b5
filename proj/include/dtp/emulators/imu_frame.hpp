#pragma once

#include <limits>

#include "dtp/emulators/crc.hpp"
#include "dtp/core/messages.hpp"

namespace dtp::imu {

inline constexpr std::uint8_t kSync0 = 0xAA;
inline constexpr std::uint8_t kSync1 = 0x55;
/// seq(1) + t_ms(4) + 6 x i16
inline constexpr std::uint8_t kPayloadLen = 17;
inline constexpr std::size_t kFrameSize = 2 + 1 + kPayloadLen + 2;

/// AA 55 | len | seq | t_ms u32 | ax ay az | gx gy gz | crc16 (over len..gz)
inline Bytes encode_frame(const ImuSample& s, std::uint8_t seq) {
  std::uint64_t ms = s.time.ns / 1'000'000ULL;
  if (ms > std::numeric_limits<std::uint32_t>::max()) throw EncodeError("IMU timestamp exceeds 32-bit milliseconds");
  Bytes out;
  out.reserve(kFrameSize);
  ByteWriter w(out);
  w.put(kSync0);
  w.put(kSync1);
  w.put(kPayloadLen);
  w.put(seq);
  w.put(static_cast<std::uint32_t>(ms));
  for (auto v : s.accel_mg) w.put(v);
  for (auto v : s.gyro_ddps) w.put(v);
  w.put(crc16_ccitt_false(ByteView(out).subspan(2)));
  return out;
}

}  // namespace dtp::imu
