#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dtp/core/error.hpp"

namespace dtp {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

/// Little-endian appender.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  template <typename T>
    requires std::is_integral_v<T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf().push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
  }

  void put_f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    put(u);
  }

  void put_raw(ByteView b) { buf().insert(buf().end(), b.begin(), b.end()); }

  /// u32 length prefix, then bytes.
  void put_blob(ByteView b) {
    put(static_cast<std::uint32_t>(b.size()));
    put_raw(b);
  }

  void put_string(std::string_view s) {
    put_blob(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }

  /// u16 length prefix, then bytes.
  void put_short_string(std::string_view s) {
    put(static_cast<std::uint16_t>(s.size()));
    put_raw(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }

  Bytes& bytes() { return buf(); }
  Bytes take() { return std::move(buf()); }

 private:
  Bytes& buf() { return out_ ? *out_ : own_; }

  Bytes own_;
  Bytes* out_ = nullptr;
};

/// Little-endian cursor; throws DecodeError on overrun.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  template <typename T>
    requires std::is_integral_v<T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  double get_f64() {
    auto u = get<std::uint64_t>();
    double v;
    std::memcpy(&v, &u, sizeof v);
    return v;
  }

  ByteView get_raw(std::size_t n) {
    need(n);
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

  Bytes get_blob() {
    auto n = get<std::uint32_t>();
    auto v = get_raw(n);
    return Bytes(v.begin(), v.end());
  }

  std::string get_string() {
    auto n = get<std::uint32_t>();
    return to_string(get_raw(n));
  }

  std::string get_short_string() {
    auto n = get<std::uint16_t>();
    return to_string(get_raw(n));
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw DecodeError("buffer underrun: need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_));
    }
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

/// FNV-1a, 64 bit. Used for determinism fingerprints, not security.
class Fnv1a64 {
 public:
  void update(ByteView b) {
    for (auto c : b) {
      h_ ^= c;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace dtp
