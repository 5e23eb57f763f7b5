#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "dtp/core/bytes.hpp"
#include "dtp/core/error.hpp"
#include "dtp/core/time.hpp"

namespace dtp {

/// A timestamped, topic-addressed message on the bus.
struct Envelope {
  std::string topic;
  std::uint64_t seq = 0;
  Timestamp publish_time;
  std::string payload_kind;
  Bytes payload;

  bool operator==(const Envelope&) const = default;
};

/// Topics are `/`-separated, non-empty segments without whitespace.
inline bool is_valid_topic(std::string_view topic) {
  if (topic.empty()) return false;
  std::size_t seg_len = 0;
  for (char c : topic) {
    if (std::isspace(static_cast<unsigned char>(c))) return false;
    if (c == '/') {
      if (seg_len == 0) return false;
      seg_len = 0;
    } else {
      ++seg_len;
    }
  }
  return seg_len > 0;
}

/// Subscription patterns: an exact topic, or a prefix ending in a single
/// trailing `*` that matches any suffix (`sensors/*`, `*`).
inline bool is_valid_pattern(std::string_view pattern) {
  if (pattern == "*") return true;
  if (!pattern.empty() && pattern.back() == '*') {
    auto prefix = pattern.substr(0, pattern.size() - 1);
    if (prefix.find('*') != std::string_view::npos) return false;
    return prefix.size() >= 2 && prefix.back() == '/' &&
           is_valid_topic(prefix.substr(0, prefix.size() - 1));
  }
  return pattern.find('*') == std::string_view::npos && is_valid_topic(pattern);
}

inline bool topic_matches(std::string_view pattern, std::string_view topic) {
  if (!pattern.empty() && pattern.back() == '*') {
    auto prefix = pattern.substr(0, pattern.size() - 1);
    return topic.size() > prefix.size() && topic.substr(0, prefix.size()) == prefix;
  }
  return pattern == topic;
}

// Wire layout: topic (u32 len + UTF-8) | seq u64 | publish_time u64 ns |
// payload_kind (u32 len + UTF-8) | payload (u32 len + bytes).
inline void serialize(const Envelope& e, ByteWriter& w) {
  w.put_string(e.topic);
  w.put(e.seq);
  w.put(e.publish_time.ns);
  w.put_string(e.payload_kind);
  w.put_blob(e.payload);
}

inline Bytes serialize(const Envelope& e) {
  ByteWriter w;
  serialize(e, w);
  return w.take();
}

inline Envelope deserialize_envelope(ByteReader& r) {
  Envelope e;
  e.topic = r.get_string();
  e.seq = r.get<std::uint64_t>();
  e.publish_time = Timestamp{r.get<std::uint64_t>()};
  e.payload_kind = r.get_string();
  e.payload = r.get_blob();
  return e;
}

inline Envelope deserialize_envelope(ByteView b) {
  ByteReader r(b);
  auto e = deserialize_envelope(r);
  if (!r.done()) throw DecodeError("trailing bytes after envelope");
  return e;
}

}  // namespace dtp
