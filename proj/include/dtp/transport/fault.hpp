#pragma once

#include <cstdint>
#include <variant>

#include "dtp/core/bytes.hpp"
#include "dtp/core/error.hpp"
#include "dtp/core/time.hpp"

namespace dtp::transport {

struct DropAll {};

/// Each outbound byte is independently replaced with probability p. Sites and
/// replacement values depend only on (seed, byte index since injection).
struct Corrupt {
  double probability = 0.0;
  std::uint64_t seed = 0;
};

struct Latency {
  Duration delay{0};
};

struct DisconnectAt {
  Timestamp at;
};

using FaultSpec = std::variant<DropAll, Corrupt, Latency, DisconnectAt>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// XOR mask applied to byte `index` under `c`; zero means untouched.
inline std::uint8_t corruption_mask(const Corrupt& c, std::uint64_t index) {
  std::uint64_t h = splitmix64(c.seed ^ splitmix64(index));
  double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  if (u >= c.probability) return 0;
  std::uint64_t h2 = splitmix64(h);
  return static_cast<std::uint8_t>(1 + h2 % 255);
}

inline void validate(const FaultSpec& f) {
  if (auto c = std::get_if<Corrupt>(&f)) {
    if (!(c->probability >= 0.0 && c->probability <= 1.0)) {
      throw ValidationError("corruption probability must be within [0,1]");
    }
  }
  if (auto l = std::get_if<Latency>(&f)) {
    if (l->delay < Duration::zero()) throw ValidationError("latency must be non-negative");
  }
}

}  // namespace dtp::transport
