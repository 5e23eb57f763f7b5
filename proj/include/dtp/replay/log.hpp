#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dtp/core/bytes.hpp"
#include "dtp/core/error.hpp"
#include "dtp/core/time.hpp"

namespace dtp::replay {

inline constexpr std::uint8_t kMagic[4] = {0x44, 0x54, 0x50, 0x4C};  // "DTPL"
inline constexpr std::uint16_t kVersion = 1;
/// Reserved channel id of the record that marks an aborted, partial file.
inline constexpr std::uint16_t kPartialMarker = 0xFFFF;

enum class Direction : std::uint8_t { ToDevice = 0, FromDevice = 1, Bus = 2 };

struct LogRecord {
  Timestamp t;
  std::uint16_t channel = 0;
  Direction direction = Direction::Bus;
  Bytes payload;

  bool operator==(const LogRecord&) const = default;
};

struct LogChannel {
  std::uint16_t id = 0;
  std::string name;

  bool operator==(const LogChannel&) const = default;
};

struct LogFile {
  std::uint16_t version = kVersion;
  std::vector<LogChannel> channels;
  std::vector<LogRecord> records;
  bool partial = false;

  std::optional<std::uint16_t> channel_id(std::string_view name) const {
    for (const auto& c : channels) {
      if (c.name == name) return c.id;
    }
    return std::nullopt;
  }

  const LogChannel* channel(std::uint16_t id) const {
    for (const auto& c : channels) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }

  bool operator==(const LogFile&) const = default;
};

inline void encode_header(ByteWriter& w, const std::vector<LogChannel>& channels) {
  std::set<std::uint16_t> seen;
  for (const auto& c : channels) {
    if (c.id == kPartialMarker) throw ValidationError("channel id 0xFFFF is reserved");
    if (!seen.insert(c.id).second) throw ValidationError("duplicate channel id " + std::to_string(c.id));
  }
  if (channels.size() > 0xFFFE) throw ValidationError("too many channels");
  w.put_raw(ByteView(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::uint16_t>(channels.size()));
  for (const auto& c : channels) {
    w.put(c.id);
    w.put_short_string(c.name);
  }
}

inline void encode_record(ByteWriter& w, const LogRecord& r) {
  w.put(r.t.ns);
  w.put(r.channel);
  w.put(static_cast<std::uint8_t>(r.direction));
  w.put_blob(r.payload);
}

inline Bytes encode_log(const LogFile& f) {
  ByteWriter w;
  encode_header(w, f.channels);
  for (const auto& r : f.records) encode_record(w, r);
  if (f.partial) encode_record(w, LogRecord{f.records.empty() ? Timestamp{} : f.records.back().t, kPartialMarker, Direction::Bus, {}});
  return w.take();
}

/// Incremental reader over an in-memory log image. Errors carry the byte
/// offset of the offending record.
class LogReader {
 public:
  explicit LogReader(Bytes image) : image_(std::move(image)) {
    ByteReader r(image_);
    try {
      auto magic = r.get_raw(4);
      if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ReplayError("bad magic", 0);
      header_.version = r.get<std::uint16_t>();
      if (header_.version != kVersion) throw ReplayError("unsupported version " + std::to_string(header_.version), 4);
      auto n = r.get<std::uint16_t>();
      for (std::uint16_t i = 0; i < n; ++i) {
        LogChannel c;
        c.id = r.get<std::uint16_t>();
        c.name = r.get_short_string();
        header_.channels.push_back(std::move(c));
      }
    } catch (const DecodeError&) {
      throw ReplayError("truncated header", r.position());
    }
    pos_ = r.position();
  }

  const LogFile& header() const { return header_; }
  bool partial() const { return partial_; }
  std::size_t offset() const { return pos_; }

  std::optional<LogRecord> next() {
    if (pos_ >= image_.size() || partial_) return std::nullopt;
    ByteReader r(ByteView(image_).subspan(pos_));
    LogRecord rec;
    try {
      rec.t = Timestamp{r.get<std::uint64_t>()};
      rec.channel = r.get<std::uint16_t>();
      auto dir = r.get<std::uint8_t>();
      if (dir > 2) throw ReplayError("invalid direction " + std::to_string(dir), pos_);
      rec.direction = static_cast<Direction>(dir);
      auto len = r.get<std::uint32_t>();
      if (len > r.remaining()) throw ReplayError("record length overruns file", pos_);
      auto p = r.get_raw(len);
      rec.payload.assign(p.begin(), p.end());
    } catch (const DecodeError&) {
      throw ReplayError("truncated record", pos_);
    }
    if (rec.channel == kPartialMarker) {
      partial_ = true;
      return std::nullopt;
    }
    if (!header_.channel(rec.channel)) throw ReplayError("record on unregistered channel " + std::to_string(rec.channel), pos_);
    if (rec.t < last_t_) throw ReplayError("timestamps decrease", pos_);
    last_t_ = rec.t;
    pos_ += r.position();
    return rec;
  }

 private:
  Bytes image_;
  LogFile header_;
  std::size_t pos_ = 0;
  Timestamp last_t_{};
  bool partial_ = false;
};

inline LogFile decode_log(Bytes image) {
  LogReader reader(std::move(image));
  LogFile f = reader.header();
  while (auto r = reader.next()) f.records.push_back(std::move(*r));
  f.partial = reader.partial();
  return f;
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline LogFile read_log(const std::string& path) { return decode_log(read_file(path)); }

inline void write_log(const std::string& path, const LogFile& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  auto bytes = encode_log(f);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path);
}

/// Records with t in [t0, t1) on the given channels; the channel table keeps
/// only the selected channels.
inline LogFile log_slice(const LogFile& f, Timestamp t0, Timestamp t1, const std::set<std::uint16_t>& channels) {
  if (t1 < t0) throw ValidationError("slice end precedes start");
  LogFile out;
  out.version = f.version;
  for (const auto& c : f.channels) {
    if (channels.contains(c.id)) out.channels.push_back(c);
  }
  for (const auto& r : f.records) {
    if (r.t >= t0 && r.t < t1 && channels.contains(r.channel)) out.records.push_back(r);
  }
  return out;
}

inline std::set<std::uint16_t> all_channels(const LogFile& f) {
  std::set<std::uint16_t> s;
  for (const auto& c : f.channels) s.insert(c.id);
  return s;
}

/// Appends records to a file as they arrive. A failed write leaves a
/// partial-file marker record (when the sink still accepts it) and throws.
class LogWriter {
 public:
  LogWriter(const std::string& path, std::vector<LogChannel> channels)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    header_.channels = std::move(channels);
    if (!out_) throw ReplayError("cannot open log sink " + path);
    ByteWriter w;
    encode_header(w, header_.channels);
    write(w.take());
  }

  ~LogWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  void append(const LogRecord& r) {
    if (!header_.channel(r.channel)) throw ValidationError("record on unregistered channel " + std::to_string(r.channel));
    if (r.t < last_t_) throw ValidationError("log timestamps must be non-decreasing");
    last_t_ = r.t;
    ByteWriter w;
    encode_record(w, r);
    write(w.take());
    ++count_;
  }

  std::size_t records() const { return count_; }

  void close() {
    if (!out_.is_open()) return;
    out_.flush();
    bool ok = static_cast<bool>(out_);
    out_.close();
    if (!ok) throw ReplayError("flush failed for " + path_);
  }

 private:
  void write(const Bytes& b) {
    out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out_) {
      out_.clear();
      ByteWriter w;
      encode_record(w, LogRecord{last_t_, kPartialMarker, Direction::Bus, {}});
      auto m = w.take();
      out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size()));
      out_.close();
      throw ReplayError("write failed for " + path_);
    }
  }

  std::ofstream out_;
  std::string path_;
  LogFile header_;
  Timestamp last_t_{};
  std::size_t count_ = 0;
};

}  // namespace dtp::replay
