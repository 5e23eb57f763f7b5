#include <gtest/gtest.h>

#include "dtp/drivers/frame_decoders.hpp"
#include "dtp/drivers/nmea_parser.hpp"
#include "dtp/emulators/emulator.hpp"

using namespace dtp;

namespace {

ScenarioConfig flat_config() {
  ScenarioConfig cfg;
  cfg.world.boxes.clear();
  cfg.world.grid = GridSpec{-30, -30, 0.5, 120, 120};
  cfg.waypoints = {{0, 0, 1.0}, {40, 0, 1.0}};
  return cfg;
}

struct Bench {
  VirtualClock clock;
  TransportContext ctx;
  Scenario scenario;
  Duration tick;

  explicit Bench(ScenarioConfig cfg = flat_config()) : scenario(cfg), tick(cfg.tick()) { ctx.clock = &clock; }

  void run(Emulator& emu, Duration d, const std::function<void()>& after = {}) {
    auto end = clock.now() + d;
    while (clock.now() < end) {
      clock.advance(tick);
      scenario.advance_to(clock.now());
      emu.on_tick(clock.now());
      if (after) after();
    }
  }
};

EmulatorConfig lidar_cfg(double sigma = 0.0) {
  EmulatorConfig c;
  c.name = "lidar";
  c.connection = "mem://lidar";
  c.rate_hz = 10;
  c.noise.lidar_sigma = sigma;
  c.seed = 42;
  return c;
}

}  // namespace

TEST(LidarSession, StartStopInfoUnknown) {
  Bench b;
  LidarEmulator emu(b.ctx, lidar_cfg(), b.scenario.config().rig.lidar);
  emu.attach_source(LiveSource{&b.scenario});
  emu.start();
  auto peer = Endpoint::open("mem://lidar", transport::Role::Connect, b.ctx);
  LidarStreamDecoder dec;
  std::vector<LidarScan> scans;
  std::string text;
  auto pump = [&] {
    auto bytes = peer->read_bytes();
    if (!emu.streaming()) {
      text += to_string(bytes);
      return;
    }
    for (auto& s : dec.feed(bytes)) scans.push_back(s);
  };

  b.run(emu, std::chrono::milliseconds(500), pump);
  EXPECT_TRUE(scans.empty());

  peer->write(to_bytes("INFO\nBOGUS\n"));
  b.run(emu, std::chrono::milliseconds(10), pump);
  EXPECT_EQ(text, std::string(lidar::kInfoReply) + lidar::kUnknownReply);

  peer->write(to_bytes("START\n"));
  b.run(emu, std::chrono::seconds(1), pump);
  EXPECT_EQ(scans.size(), 10u);
  for (std::size_t i = 0; i < scans.size(); ++i) {
    // exact multiples of the 100 ms period
    EXPECT_EQ(scans[i].time.ns % 100'000'000ULL, 0u);
    EXPECT_EQ(scans[i].scan_id, i);
  }
  EXPECT_EQ(dec.counters().resyncs, 0u);

  peer->write(to_bytes("STOP\n"));
  b.run(emu, std::chrono::milliseconds(10), pump);
  auto n = scans.size();
  b.run(emu, std::chrono::seconds(1), pump);
  EXPECT_EQ(scans.size(), n);
}

TEST(LidarEmulator, FlatGroundWithinFourSigmaOfRaycast) {
  const double sigma = 0.02;
  auto cfg = flat_config();
  cfg.waypoints = {{0, 0, 0.0}};
  Bench b(cfg);
  LidarEmulator emu(b.ctx, lidar_cfg(sigma), cfg.rig.lidar);
  emu.attach_source(LiveSource{&b.scenario});
  emu.start();
  auto peer = Endpoint::open("mem://lidar", transport::Role::Connect, b.ctx);
  peer->write(to_bytes("START\n"));
  LidarStreamDecoder dec;
  std::vector<LidarScan> scans;
  b.run(emu, std::chrono::seconds(2), [&] {
    for (auto& s : dec.feed(peer->read_bytes())) scans.push_back(s);
  });
  ASSERT_GE(scans.size(), 19u);
  // noiseless oracle from the same pose and quantized beam angles
  auto truth = raycast_scan(b.scenario.terrain(), b.scenario.mount_pose(cfg.rig.lidar_truth_mount()), emu.geometry());
  int checked = 0;
  for (const auto& s : scans) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] > emu.geometry().max_range) {
        EXPECT_EQ(s.ranges_mm[i], 0);
        continue;
      }
      ASSERT_NEAR(s.ranges_mm[i] / 1000.0, truth[i], 4 * sigma + 1e-3);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Emulator, SourceSwitchWhileRunningRejected) {
  Bench b;
  LidarEmulator emu(b.ctx, lidar_cfg(), b.scenario.config().rig.lidar);
  EXPECT_THROW(emu.start(), ModeError);
  emu.attach_source(LiveSource{&b.scenario});
  emu.start();
  EXPECT_THROW(emu.attach_source(ReplaySource{}), ModeError);
  emu.stop();
  EXPECT_NO_THROW(emu.attach_source(ReplaySource{}));
}

TEST(Emulator, ReplayEmitsLoggedBytesVerbatim) {
  Bench b;
  ReplaySource src;
  src.chunks.push_back({Timestamp::from_millis(20), to_bytes("abc")});
  src.chunks.push_back({Timestamp::from_millis(20), to_bytes("def")});
  src.chunks.push_back({Timestamp::from_millis(70), to_bytes("ghi")});
  EmulatorConfig c = lidar_cfg();
  LidarEmulator emu(b.ctx, c, b.scenario.config().rig.lidar);
  emu.attach_source(src);
  emu.start();
  auto peer = Endpoint::open("mem://lidar", transport::Role::Connect, b.ctx);
  std::vector<transport::Chunk> got;
  b.run(emu, std::chrono::milliseconds(100), [&] {
    for (auto& ch : peer->read()) got.push_back(ch);
  });
  ASSERT_EQ(got.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(got[i].data, src.chunks[i].data);
    EXPECT_EQ(got[i].arrival, src.chunks[i].arrival);
  }
}

TEST(Emulator, LiveAndReplayFramingIdentical) {
  Bench b;
  EmulatorConfig c;
  c.name = "imu";
  c.connection = "mem://imu";
  c.rate_hz = 100;
  c.noise.gyro_sigma = 0.01;
  ImuEmulator live(b.ctx, c);
  live.attach_source(LiveSource{&b.scenario});
  live.start();
  ReplaySource rec;
  live.endpoint()->set_tap([&](transport::TapDirection d, Timestamp t, ByteView data) {
    if (d == transport::TapDirection::Outbound) rec.chunks.push_back({t, Bytes(data.begin(), data.end())});
  });
  auto peer = Endpoint::open("mem://imu", transport::Role::Connect, b.ctx);
  ImuStreamDecoder live_dec;
  std::vector<ImuFrame> live_frames;
  b.run(live, std::chrono::seconds(1), [&] {
    for (auto& f : live_dec.feed(peer->read_bytes())) live_frames.push_back(f);
  });
  live.stop();
  peer.reset();

  Bench b2;
  c.connection = "mem://imu2";
  ImuEmulator replay(b2.ctx, c);
  replay.attach_source(rec);
  replay.start();
  auto peer2 = Endpoint::open("mem://imu2", transport::Role::Connect, b2.ctx);
  ImuStreamDecoder replay_dec;
  std::vector<ImuFrame> replay_frames;
  b2.run(replay, std::chrono::seconds(1), [&] {
    for (auto& f : replay_dec.feed(peer2->read_bytes())) replay_frames.push_back(f);
  });
  ASSERT_EQ(live_frames.size(), 100u);
  EXPECT_EQ(replay_frames.size(), live_frames.size());
  for (std::size_t i = 0; i < live_frames.size(); ++i) {
    EXPECT_EQ(replay_frames[i].sample, live_frames[i].sample);
    EXPECT_EQ(live_frames[i].sample.time.ns, (i + 1) * 10'000'000ULL);
  }
  EXPECT_EQ(live_dec.counters().resyncs, 0u);
  EXPECT_EQ(replay_dec.counters().resyncs, 0u);
}

TEST(Emulator, SeededNoiseIsReproducible) {
  auto capture = [](std::uint64_t seed) {
    Bench b;
    EmulatorConfig c;
    c.name = "gps";
    c.connection = "mem://gps";
    c.noise.gps_sigma = 0.5;
    c.seed = seed;
    GpsEmulator emu(b.ctx, c, b.scenario.config().world.origin);
    emu.attach_source(LiveSource{&b.scenario});
    emu.start();
    auto peer = Endpoint::open("mem://gps", transport::Role::Connect, b.ctx);
    Bytes all;
    b.run(emu, std::chrono::seconds(2), [&] {
      auto bytes = peer->read_bytes();
      all.insert(all.end(), bytes.begin(), bytes.end());
    });
    return all;
  };
  auto a = capture(7), b = capture(7), c = capture(8);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(GpsEmulator, SentencesParseToTruth) {
  Bench b;
  EmulatorConfig c;
  c.name = "gps";
  c.connection = "mem://gps";
  GpsEmulator emu(b.ctx, c, b.scenario.config().world.origin);
  emu.attach_source(LiveSource{&b.scenario});
  emu.start();
  auto peer = Endpoint::open("mem://gps", transport::Role::Connect, b.ctx);
  nmea::LineSplitter split;
  nmea::FixAssembler fixes;
  int n = 0;
  b.run(emu, std::chrono::seconds(3), [&] {
    split.feed(
        peer->read_bytes(),
        [&](std::string_view line) {
          auto p = nmea::parse_line(line);
          ASSERT_EQ(p.status, nmea::LineStatus::Ok);
          if (auto f = fixes.push(p)) {
            ++n;
            EXPECT_EQ(f->time, b.clock.now());
            auto truth = b.scenario.truth_gps();
            Vec3 d = geo_to_enu(f->position, b.scenario.config().world.origin) -
                     geo_to_enu(truth.position, b.scenario.config().world.origin);
            EXPECT_LT(std::hypot(d.x(), d.y()), 0.2);
          }
        },
        [] { FAIL(); });
  });
  EXPECT_EQ(n, 30);
}
