#pragma once

#include <array>
#include <cstdint>

#include "dtp/core/bytes.hpp"

namespace dtp {

namespace detail {

constexpr std::array<std::uint16_t, 256> make_crc16_table() {
  std::array<std::uint16_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t c = static_cast<std::uint16_t>(i << 8);
    for (int b = 0; b < 8; ++b) c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ 0x1021) : static_cast<std::uint16_t>(c << 1);
    t[i] = c;
  }
  return t;
}

inline constexpr auto kCrc16Table = make_crc16_table();

}  // namespace detail

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
constexpr std::uint16_t crc16_ccitt_false(ByteView data, std::uint16_t crc = 0xFFFF) {
  for (auto b : data) {
    crc = static_cast<std::uint16_t>((crc << 8) ^ detail::kCrc16Table[((crc >> 8) ^ b) & 0xFF]);
  }
  return crc;
}

/// XOR of every byte, as used by NMEA-0183.
constexpr std::uint8_t nmea_xor(ByteView data) {
  std::uint8_t x = 0;
  for (auto b : data) x ^= b;
  return x;
}

}  // namespace dtp
