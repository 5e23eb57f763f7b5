#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "dtp/emulators/imu_frame.hpp"
#include "dtp/emulators/lidar_packet.hpp"

namespace dtp {

struct DecoderCounters {
  std::uint64_t frames_ok = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t resyncs = 0;
};

struct ImuFrame {
  std::uint8_t seq = 0;
  ImuSample sample;

  bool operator==(const ImuFrame&) const = default;
};

namespace detail {

/// Shared hunting logic for sync-prefixed binary frames. A resync is one
/// episode of discarding bytes, however many bytes it takes.
class SyncBuffer {
 public:
  Bytes& bytes() { return buf_; }

  void discard(std::size_t n, DecoderCounters& c) {
    if (n == 0) return;
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
    if (!hunting_) {
      hunting_ = true;
      ++c.resyncs;
    }
  }

  void consume_frame(std::size_t n) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
    hunting_ = false;
  }

  /// Drops bytes ahead of the first (possibly partial) occurrence of `sync`.
  /// Returns true when the buffer now starts with the complete sync pattern.
  bool align(ByteView sync, DecoderCounters& c) {
    std::size_t i = 0;
    for (; i < buf_.size(); ++i) {
      std::size_t n = std::min(sync.size(), buf_.size() - i);
      if (std::memcmp(buf_.data() + i, sync.data(), n) == 0) break;
    }
    discard(i, c);
    return buf_.size() >= sync.size();
  }

  void clear() {
    buf_.clear();
    hunting_ = false;
  }

 private:
  Bytes buf_;
  bool hunting_ = false;
};

}  // namespace detail

/// Incremental IMU frame decoder. On a CRC failure the frame is dropped and
/// the search restarts one byte after the failed sync.
class ImuStreamDecoder {
 public:
  template <typename OnFrame>
  void feed(ByteView data, OnFrame&& on_frame) {
    // bounded working set: never buffer more than two frames worth
    while (!data.empty()) {
      auto n = std::min(data.size(), imu::kFrameSize);
      auto& b = buf_.bytes();
      b.insert(b.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n));
      data = data.subspan(n);
      drain(on_frame);
    }
  }

  std::vector<ImuFrame> feed(ByteView data) {
    std::vector<ImuFrame> out;
    feed(data, [&](const ImuFrame& f) { out.push_back(f); });
    return out;
  }

  const DecoderCounters& counters() const { return counters_; }
  std::size_t buffered() { return buf_.bytes().size(); }
  void reset() { buf_.clear(); }

 private:
  template <typename OnFrame>
  void drain(OnFrame& on_frame) {
    static constexpr std::uint8_t sync[2] = {imu::kSync0, imu::kSync1};
    auto& b = buf_.bytes();
    while (buf_.align(ByteView(sync, 2), counters_)) {
      if (b.size() < 3) return;
      if (b[2] != imu::kPayloadLen) {
        ++counters_.frames_dropped;
        buf_.discard(1, counters_);
        continue;
      }
      if (b.size() < imu::kFrameSize) return;
      ByteView frame(b.data(), imu::kFrameSize);
      std::uint16_t got = static_cast<std::uint16_t>(frame[imu::kFrameSize - 2] | (frame[imu::kFrameSize - 1] << 8));
      if (crc16_ccitt_false(frame.subspan(2, imu::kFrameSize - 4)) != got) {
        ++counters_.frames_dropped;
        buf_.discard(1, counters_);
        continue;
      }
      ByteReader r(frame.subspan(3));
      ImuFrame f;
      f.seq = r.get<std::uint8_t>();
      f.sample.time = Timestamp::from_millis(r.get<std::uint32_t>());
      for (auto& v : f.sample.accel_mg) v = r.get<std::int16_t>();
      for (auto& v : f.sample.gyro_ddps) v = r.get<std::int16_t>();
      buf_.consume_frame(imu::kFrameSize);
      ++counters_.frames_ok;
      on_frame(f);
    }
  }

  detail::SyncBuffer buf_;
  DecoderCounters counters_;
};

/// Incremental LiDAR packet decoder. An invalid beam count or CRC drops the
/// packet and resumes the search for the next magic one byte later.
class LidarStreamDecoder {
 public:
  template <typename OnScan>
  void feed(ByteView data, OnScan&& on_scan) {
    while (!data.empty()) {
      auto n = std::min(data.size(), lidar::kMaxPacketSize);
      auto& b = buf_.bytes();
      b.insert(b.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n));
      data = data.subspan(n);
      drain(on_scan);
    }
  }

  std::vector<LidarScan> feed(ByteView data) {
    std::vector<LidarScan> out;
    feed(data, [&](const LidarScan& s) { out.push_back(s); });
    return out;
  }

  const DecoderCounters& counters() const { return counters_; }
  std::size_t buffered() { return buf_.bytes().size(); }
  void reset() { buf_.clear(); }

 private:
  template <typename OnScan>
  void drain(OnScan& on_scan) {
    auto& b = buf_.bytes();
    while (buf_.align(ByteView(lidar::kMagic, 4), counters_)) {
      if (b.size() < 4 + lidar::kHeaderSize) return;
      std::uint16_t count = static_cast<std::uint16_t>(b[24] | (b[25] << 8));
      if (count == 0 || count > kMaxLidarBeams) {
        ++counters_.frames_dropped;
        buf_.discard(1, counters_);
        continue;
      }
      std::size_t total = 4 + lidar::kHeaderSize + 2 * std::size_t(count) + 2;
      if (b.size() < total) return;
      ByteView pkt(b.data(), total);
      std::uint16_t got = static_cast<std::uint16_t>(pkt[total - 2] | (pkt[total - 1] << 8));
      if (crc16_ccitt_false(pkt.subspan(4, total - 6)) != got) {
        ++counters_.frames_dropped;
        buf_.discard(1, counters_);
        continue;
      }
      ByteReader r(pkt.subspan(4));
      LidarScan s;
      s.scan_id = r.get<std::uint32_t>();
      s.time = Timestamp{r.get<std::uint64_t>()};
      s.start_angle_urad = r.get<std::int32_t>();
      s.increment_urad = r.get<std::uint32_t>();
      s.ranges_mm.resize(r.get<std::uint16_t>());
      for (auto& v : s.ranges_mm) v = r.get<std::uint16_t>();
      buf_.consume_frame(total);
      if (s.increment_urad == 0) {
        ++counters_.frames_dropped;
        continue;
      }
      ++counters_.frames_ok;
      on_scan(s);
    }
  }

  detail::SyncBuffer buf_;
  DecoderCounters counters_;
};

}  // namespace dtp
