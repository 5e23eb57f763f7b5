#include <random>

#include <gtest/gtest.h>

#include "dtp/drivers/frame_decoders.hpp"
#include "dtp/drivers/nmea_parser.hpp"
#include "dtp/emulators/imu_frame.hpp"
#include "dtp/emulators/lidar_packet.hpp"
#include "dtp/emulators/nmea_encoder.hpp"

using namespace dtp;

namespace {

// Bit-serial reference, independent of the table-driven implementation.
std::uint16_t crc_oracle(ByteView data) {
  std::uint16_t crc = 0xFFFF;
  for (auto byte : data) {
    for (int bit = 7; bit >= 0; --bit) {
      bool in = (byte >> bit) & 1;
      bool top = crc & 0x8000;
      crc = static_cast<std::uint16_t>(crc << 1);
      if (in != top) crc ^= 0x1021;
    }
  }
  return crc;
}

GpsFix sample_fix() {
  GpsFix f;
  f.time = Timestamp::from_seconds(12 * 3600 + 34 * 60 + 56.78);
  f.position = {54.3233, 10.1228, 13.4};
  f.quality = 1;
  f.satellites = 9;
  f.hdop = 0.9;
  f.speed_mps = 2.5;
  f.course_deg = 87.25;
  return f;
}

ImuSample sample_imu() {
  ImuSample s;
  s.time = Timestamp::from_millis(123456);
  s.accel_mg = {12, -40, 1000};
  s.gyro_ddps = {-3, 0, 286};
  return s;
}

LidarScan sample_scan(std::size_t beams = 361) {
  LidarScan s;
  s.time = Timestamp{987654321};
  s.scan_id = 17;
  s.start_angle_urad = -3141593;
  s.increment_urad = 8727;
  s.ranges_mm.resize(beams);
  for (std::size_t i = 0; i < beams; ++i) s.ranges_mm[i] = static_cast<std::uint16_t>(1000 + i * 7);
  if (beams > 5) s.ranges_mm[5] = 0;
  return s;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto nl = s.find('\n', start);
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

}  // namespace

TEST(Crc16, MatchesBitSerialOracle) {
  EXPECT_EQ(crc16_ccitt_false(to_bytes("123456789")), crc_oracle(to_bytes("123456789")));
  EXPECT_EQ(crc_oracle(to_bytes("123456789")), 0x29B1);  // published check value
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    Bytes b(rng() % 64);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(crc16_ccitt_false(b), crc_oracle(b));
  }
}

TEST(Crc16, EmptyPayloadIsInitValue) { EXPECT_EQ(crc16_ccitt_false(ByteView{}), 0xFFFF); }

TEST(Nmea, ChecksumOfSingleByte) { EXPECT_EQ(nmea::checksum_hex("A"), "41"); }

TEST(Nmea, LatitudeFields) {
  EXPECT_EQ(nmea::format_angle(54.0, true), "5400.0000,N");
  EXPECT_EQ(nmea::format_angle(54.3233, true), "5419.3980,N");
  EXPECT_EQ(nmea::format_angle(-33.5, true), "3330.0000,S");
  EXPECT_EQ(nmea::format_angle(-10.1228, false), "01007.3680,W");
  // 59.99999 arcmin rounds up into the next degree
  EXPECT_EQ(nmea::format_angle(54.0 + 59.999996 / 60.0, true), "5500.0000,N");
}

TEST(Nmea, SentenceShape) {
  auto s = nmea::encode(sample_fix());
  auto lines = split_lines(s);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "$GPGGA,123456.78,5419.3980,N,01007.3680,E,1,09,0.9,13.4,M,0.0,M,,*" +
                          nmea::checksum_hex("GPGGA,123456.78,5419.3980,N,01007.3680,E,1,09,0.9,13.4,M,0.0,M,,") +
                          "\r");
  EXPECT_TRUE(lines[1].starts_with("$GPRMC,123456.78,A,5419.3980,N,01007.3680,E,4.860,87.25,150123,,,A*"));
}

TEST(Nmea, EncodeRejectsOutOfRange) {
  auto f = sample_fix();
  f.position.latitude = 91;
  EXPECT_THROW(nmea::encode(f), EncodeError);
  f = sample_fix();
  f.hdop = 0.0;
  EXPECT_THROW(nmea::encode(f), EncodeError);
  f = sample_fix();
  f.satellites = 100;
  EXPECT_THROW(nmea::encode(f), EncodeError);
}

TEST(Nmea, ParseRoundTripWithinEncodingPrecision) {
  auto in = sample_fix();
  nmea::FixAssembler asm_;
  std::optional<GpsFix> out;
  for (auto& line : split_lines(nmea::encode(in))) {
    auto p = nmea::parse_line(line);
    ASSERT_EQ(p.status, nmea::LineStatus::Ok) << p.error;
    if (auto f = asm_.push(p)) out = f;
  }
  ASSERT_TRUE(out);
  EXPECT_NEAR(out->position.latitude, in.position.latitude, 1e-4 / 60.0);
  EXPECT_NEAR(out->position.longitude, in.position.longitude, 1e-4 / 60.0);
  EXPECT_NEAR(out->position.altitude, in.position.altitude, 0.05);
  EXPECT_EQ(out->time, Timestamp::from_seconds(12 * 3600 + 34 * 60 + 56.78));
  EXPECT_EQ(out->quality, 1);
  EXPECT_EQ(out->satellites, 9);
  EXPECT_NEAR(out->speed_mps, 2.5, 0.0006);
  EXPECT_NEAR(out->course_deg, 87.25, 1e-9);
}

TEST(Nmea, FlippedPayloadByteIsDropped) {
  auto line = split_lines(nmea::encode(sample_fix()))[0];
  line[20] ^= 0x01;
  EXPECT_EQ(nmea::parse_line(line).status, nmea::LineStatus::Dropped);
}

TEST(Nmea, UnknownSentenceIgnored) {
  auto line = nmea::frame("GPZDA,123456.78,15,01,2023,00,00");
  line.pop_back();  // '\n'
  EXPECT_EQ(nmea::parse_line(line).status, nmea::LineStatus::Unknown);
}

TEST(Nmea, LineSplitterBoundsLength) {
  nmea::LineSplitter split(16);
  std::vector<std::string> lines;
  int overflows = 0;
  split.feed(to_bytes("short\r\n" + std::string(40, 'x') + "\nok\n"),
             [&](std::string_view l) { lines.emplace_back(l); }, [&] { ++overflows; });
  EXPECT_EQ(lines, (std::vector<std::string>{"short\r", "ok"}));
  EXPECT_EQ(overflows, 1);
}

TEST(ImuFrame, LayoutAndScaling) {
  auto s = imu_from_si(Timestamp::from_millis(5), {0, 0, kStandardGravity}, {0, 0, 0});
  EXPECT_EQ(s.accel_mg[2], 1000);
  auto f = imu::encode_frame(s, 3);
  ASSERT_EQ(f.size(), imu::kFrameSize);
  EXPECT_EQ(f[0], 0xAA);
  EXPECT_EQ(f[1], 0x55);
  EXPECT_EQ(f[2], 17);
  EXPECT_EQ(f[3], 3);
  // t_ms = 5 little-endian
  EXPECT_EQ(f[4], 5);
  EXPECT_EQ(f[7], 0);
  // az = 1000 milli-g = 0x03E8
  EXPECT_EQ(f[12], 0xE8);
  EXPECT_EQ(f[13], 0x03);
  std::uint16_t crc = crc_oracle(ByteView(f).subspan(2, 18));
  EXPECT_EQ(f[20], crc & 0xFF);
  EXPECT_EQ(f[21], crc >> 8);
}

TEST(ImuFrame, OverflowIsEncodeError) {
  EXPECT_THROW(imu_from_si(Timestamp{}, {400.0, 0, 0}, {0, 0, 0}), EncodeError);
  auto sat = imu_from_si(Timestamp{}, {400.0, 0, 0}, {0, 0, -100.0}, true);
  EXPECT_EQ(sat.accel_mg[0], 32767);
  EXPECT_EQ(sat.gyro_ddps[2], -32768);
  ImuSample late;
  late.time = Timestamp{(1ULL << 32) * 1'000'000ULL};
  EXPECT_THROW(imu::encode_frame(late, 0), EncodeError);
}

TEST(ImuDecoder, GarbageThenFrame) {
  Bytes stream{1, 2, 3, 0xAA, 9, 0x55, 7};
  auto frame = imu::encode_frame(sample_imu(), 1);
  stream.insert(stream.end(), frame.begin(), frame.end());
  ImuStreamDecoder dec;
  auto out = dec.feed(stream);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].sample, sample_imu());
  EXPECT_EQ(dec.counters().resyncs, 1u);
  EXPECT_EQ(dec.counters().frames_ok, 1u);
}

TEST(ImuDecoder, TruncatedFrameThenComplete) {
  auto a = imu::encode_frame(sample_imu(), 1);
  auto b = imu::encode_frame(sample_imu(), 2);
  Bytes stream(a.begin(), a.begin() + 11);
  stream.insert(stream.end(), b.begin(), b.end());
  ImuStreamDecoder dec;
  auto out = dec.feed(stream);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].seq, 2);
  EXPECT_EQ(dec.counters().frames_dropped, 1u);
  EXPECT_EQ(dec.counters().resyncs, 1u);
}

TEST(ImuDecoder, ConcatenatedFramesInOrderAcrossArbitrarySplits) {
  Bytes stream;
  for (int i = 0; i < 50; ++i) {
    auto s = sample_imu();
    s.time = Timestamp::from_millis(10 * i);
    auto f = imu::encode_frame(s, static_cast<std::uint8_t>(i));
    stream.insert(stream.end(), f.begin(), f.end());
  }
  std::mt19937_64 rng(9);
  ImuStreamDecoder dec;
  std::vector<ImuFrame> out;
  for (std::size_t off = 0; off < stream.size();) {
    auto n = std::min<std::size_t>(1 + rng() % 40, stream.size() - off);
    for (auto& f : dec.feed(ByteView(stream).subspan(off, n))) out.push_back(f);
    off += n;
  }
  ASSERT_EQ(out.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(out[i].seq, i);
  EXPECT_EQ(dec.counters().resyncs, 0u);
}

TEST(LidarPacket, LayoutAndDecode) {
  auto s = sample_scan();
  auto p = lidar::encode_packet(s);
  EXPECT_EQ(p.size(), 4 + 22 + 2 * 361 + 2u);
  EXPECT_EQ(to_string(ByteView(p).subspan(0, 4)), "LDTP");
  LidarStreamDecoder dec;
  auto out = dec.feed(p);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], s);
}

TEST(LidarPacket, RejectsBadScans) {
  auto s = sample_scan();
  s.increment_urad = 0;
  EXPECT_THROW(lidar::encode_packet(s), EncodeError);
  s = sample_scan(0);
  EXPECT_THROW(lidar::encode_packet(s), EncodeError);
  s = sample_scan(3601);
  EXPECT_THROW(lidar::encode_packet(s), EncodeError);
}

TEST(LidarDecoder, CorruptCrcDroppedNextParsed) {
  auto a = lidar::encode_packet(sample_scan());
  auto s2 = sample_scan();
  s2.scan_id = 18;
  auto b = lidar::encode_packet(s2);
  a[100] ^= 0x20;
  Bytes stream = a;
  stream.insert(stream.end(), b.begin(), b.end());
  LidarStreamDecoder dec;
  auto out = dec.feed(stream);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].scan_id, 18u);
  EXPECT_EQ(dec.counters().frames_dropped, 1u);
}

TEST(LidarDecoder, CountMismatchResyncsAtNextMagic) {
  auto a = lidar::encode_packet(sample_scan(10));
  a[24] = 9;  // claims one beam fewer than the payload carries
  auto b = lidar::encode_packet(sample_scan(10));
  Bytes stream = a;
  stream.insert(stream.end(), b.begin(), b.end());
  LidarStreamDecoder dec;
  auto out = dec.feed(stream);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(dec.counters().frames_dropped, 1u);
  EXPECT_EQ(dec.counters().resyncs, 1u);
}

TEST(Decoders, RandomBytesNeverGrowTheBuffer) {
  std::mt19937_64 rng(77);
  Bytes noise(200000);
  for (auto& b : noise) b = static_cast<std::uint8_t>(rng());
  ImuStreamDecoder imu_dec;
  LidarStreamDecoder lidar_dec;
  for (std::size_t off = 0; off < noise.size(); off += 4096) {
    auto chunk = ByteView(noise).subspan(off, std::min<std::size_t>(4096, noise.size() - off));
    imu_dec.feed(chunk);
    lidar_dec.feed(chunk);
    ASSERT_LE(imu_dec.buffered(), 2 * imu::kFrameSize);
    ASSERT_LE(lidar_dec.buffered(), 2 * lidar::kMaxPacketSize);
  }
}
