#pragma once

#include <chrono>
#include <compare>
#include <cstdint>

namespace dtp {

using Duration = std::chrono::nanoseconds;

/// Nanoseconds since scenario epoch.
struct Timestamp {
  std::uint64_t ns = 0;

  constexpr auto operator<=>(const Timestamp&) const = default;

  static constexpr Timestamp from_seconds(double s) {
    return Timestamp{static_cast<std::uint64_t>(s * 1e9 + 0.5)};
  }
  static constexpr Timestamp from_millis(std::uint64_t ms) { return Timestamp{ms * 1'000'000ULL}; }

  constexpr double seconds() const { return static_cast<double>(ns) * 1e-9; }
  constexpr std::uint64_t millis() const { return ns / 1'000'000ULL; }
};

constexpr Timestamp operator+(Timestamp t, Duration d) {
  return Timestamp{t.ns + static_cast<std::uint64_t>(d.count())};
}

constexpr Duration operator-(Timestamp a, Timestamp b) {
  return Duration{static_cast<std::int64_t>(a.ns) - static_cast<std::int64_t>(b.ns)};
}

constexpr Duration seconds_to_duration(double s) {
  return Duration{static_cast<std::int64_t>(s * 1e9 + (s >= 0 ? 0.5 : -0.5))};
}

constexpr double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-9; }

}  // namespace dtp
