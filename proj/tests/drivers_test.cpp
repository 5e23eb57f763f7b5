#include <thread>

#include <gtest/gtest.h>

#include "dtp/drivers/driver.hpp"
#include "dtp/emulators/emulator.hpp"

using namespace dtp;
using transport::Role;

namespace {

struct Capture {
  std::vector<Envelope> envelopes;
  SubscriptionId id = 0;

  Capture(Bus& bus, const std::string& pattern) {
    id = bus.subscribe(pattern, [this](const Envelope& e) { envelopes.push_back(e); });
  }

  std::vector<Bytes> payloads() const {
    std::vector<Bytes> out;
    for (auto& e : envelopes) out.push_back(e.payload);
    return out;
  }
};

DriverConfig driver_cfg(std::string name, std::string conn, double rate = 10.0) {
  DriverConfig c;
  c.name = std::move(name);
  c.connection = std::move(conn);
  c.rate_hz = rate;
  return c;
}

GpsFix fix_at(double seconds) {
  GpsFix f;
  f.time = Timestamp::from_seconds(seconds);
  f.position = {54.3233, 10.1228, 12.0};
  f.quality = 1;
  f.satellites = 8;
  f.hdop = 1.1;
  f.speed_mps = 1.5;
  f.course_deg = 90.0;
  return f;
}

/// A raw listener standing in for a device, plus a driver connected to it.
template <typename D>
struct Scripted {
  TransportContext ctx;
  Bus bus;
  std::unique_ptr<Endpoint> device;
  std::unique_ptr<D> driver;

  explicit Scripted(const std::string& conn, const std::string& name = "dev") {
    device = Endpoint::open(conn, Role::Listen, ctx);
    auto target = conn;
    if (device->connection().scheme == transport::Scheme::Tcp) target = "tcp://127.0.0.1:" + std::to_string(device->port());
    driver = std::make_unique<D>(bus, ctx, driver_cfg(name, target));
    driver->start();
    device->poll();
  }

  void send(ByteView b) {
    device->write(b);
    driver->poll();
  }
};

}  // namespace

TEST(GpsDriver, PublishesEncodedFix) {
  Scripted<GpsDriver> s("mem://gps");
  Capture cap(s.bus, "sensors/gps/fix");
  auto in = fix_at(100.5);
  s.send(to_bytes(nmea::encode(in)));
  ASSERT_EQ(cap.envelopes.size(), 1u);
  EXPECT_EQ(cap.envelopes[0].payload_kind, kinds::kGpsFix);
  auto out = gps_fix_from_payload(cap.envelopes[0].payload);
  EXPECT_NEAR(out.position.latitude, in.position.latitude, 1e-4 / 60);
  EXPECT_NEAR(out.position.longitude, in.position.longitude, 1e-4 / 60);
  EXPECT_EQ(out.time, in.time);
  EXPECT_EQ(s.driver->diagnostics().frames_ok, 2u);
}

TEST(GpsDriver, FlippedByteDropped) {
  Scripted<GpsDriver> s("mem://gps");
  Capture cap(s.bus, "sensors/*");
  auto text = nmea::encode(fix_at(1.0));
  text[10] = text[10] == '1' ? '2' : '1';
  s.send(to_bytes(text));
  EXPECT_TRUE(cap.envelopes.empty());
  EXPECT_EQ(s.driver->diagnostics().frames_dropped, 1u);
}

TEST(GpsDriver, UnknownSentenceIgnored) {
  Scripted<GpsDriver> s("mem://gps");
  Capture cap(s.bus, "sensors/*");
  s.send(to_bytes(nmea::frame("GPZDA,000001.00,15,01,2023,00,00")));
  EXPECT_TRUE(cap.envelopes.empty());
  EXPECT_EQ(s.driver->diagnostics().frames_dropped, 0u);
  EXPECT_EQ(s.driver->diagnostics().frames_ok, 0u);
}

TEST(ImuDriver, GarbageThenFrame) {
  Scripted<ImuDriver> s("mem://imu");
  Capture cap(s.bus, "sensors/imu/sample");
  Bytes b{9, 8, 7, 6, 5, 4, 3};
  ImuSample smp;
  smp.time = Timestamp::from_millis(10);
  smp.accel_mg = {1, 2, 1000};
  auto f = imu::encode_frame(smp, 0);
  b.insert(b.end(), f.begin(), f.end());
  s.send(b);
  ASSERT_EQ(cap.envelopes.size(), 1u);
  EXPECT_EQ(imu_sample_from_payload(cap.envelopes[0].payload), smp);
  EXPECT_EQ(s.driver->diagnostics().resyncs, 1u);
}

TEST(LidarDriver, SendsStartAndDropsCorruptPacket) {
  Scripted<LidarDriver> s("mem://lidar");
  Capture cap(s.bus, "sensors/lidar/scan");
  EXPECT_EQ(to_string(s.device->read_bytes()), "START\n");
  LidarScan a;
  a.time = Timestamp{1};
  a.increment_urad = 100;
  a.ranges_mm = {1, 2, 3};
  auto b = a;
  b.scan_id = 1;
  auto pa = lidar::encode_packet(a), pb = lidar::encode_packet(b);
  pa[pa.size() - 1] ^= 0xFF;
  pa.insert(pa.end(), pb.begin(), pb.end());
  s.send(pa);
  ASSERT_EQ(cap.envelopes.size(), 1u);
  EXPECT_EQ(lidar_scan_from_payload(cap.envelopes[0].payload), b);
  EXPECT_EQ(s.driver->diagnostics().frames_dropped, 1u);
}

TEST(Driver, ConnectRefusedIsTransportError) {
  TransportContext ctx;
  Bus bus;
  GpsDriver d(bus, ctx, driver_cfg("gps", "mem://nobody"));
  EXPECT_THROW(d.start(), TransportError);
}

TEST(Driver, ConfigValidation) {
  TransportContext ctx;
  Bus bus;
  EXPECT_THROW(GpsDriver(bus, ctx, driver_cfg("gps", "mem://x", 0.0)), ValidationError);
  EXPECT_THROW(GpsDriver(bus, ctx, driver_cfg("gps", "serial://x")), ValidationError);
  auto c = driver_cfg("gps", "mem://x");
  c.topic_prefix = "/bad";
  EXPECT_THROW(GpsDriver(bus, ctx, c), ValidationError);
}

namespace {

/// Byte script mixing valid frames, garbage and a corrupted frame.
Bytes imu_script() {
  Bytes out;
  for (int i = 0; i < 200; ++i) {
    ImuSample s;
    s.time = Timestamp::from_millis(10 * i);
    s.accel_mg = {static_cast<std::int16_t>(i), static_cast<std::int16_t>(-i), 1000};
    s.gyro_ddps = {0, 0, static_cast<std::int16_t>(i * 3)};
    auto f = imu::encode_frame(s, static_cast<std::uint8_t>(i));
    if (i == 50) f[9] ^= 0x10;
    out.insert(out.end(), f.begin(), f.end());
    if (i % 37 == 0) out.insert(out.end(), {0xAA, 0x00, 0x13, 0x37});
  }
  return out;
}

std::vector<Bytes> run_script(const std::string& conn) {
  Scripted<ImuDriver> s(conn, "imu");
  Capture cap(s.bus, "sensors/imu/sample");
  auto script = imu_script();
  for (std::size_t off = 0; off < script.size(); off += 97) {
    s.device->write(ByteView(script).subspan(off, std::min<std::size_t>(97, script.size() - off)));
  }
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (cap.envelopes.size() < 199 && std::chrono::steady_clock::now() < deadline) {
    s.driver->endpoint()->wait_readable(std::chrono::milliseconds(20));
    s.driver->poll();
  }
  return cap.payloads();
}

}  // namespace

TEST(Driver, TransportTransparency) {
  auto mem = run_script("mem://imu");
  auto tcp = run_script("tcp://127.0.0.1:0");
  auto pty = run_script("pty:///tmp/dtp-driver-test-imu");
  EXPECT_EQ(mem.size(), 199u);
  EXPECT_EQ(mem, tcp);
  EXPECT_EQ(mem, pty);
}

namespace {

ScenarioConfig drive_config() {
  ScenarioConfig cfg;
  cfg.waypoints = {{-6, 2.5, 1.5}, {16, 2.5, 1.5}};
  cfg.noise.gps_sigma = 0.3;
  cfg.noise.gyro_sigma = 0.01;
  cfg.noise.lidar_sigma = 0.01;
  cfg.noise.lidar_dropout = 0.02;
  return cfg;
}

/// Scenario, three emulators and three drivers on one virtual clock.
struct Pipeline {
  VirtualClock clock;
  TransportContext ctx;
  Bus bus;
  Scenario scenario;
  std::vector<std::unique_ptr<Emulator>> emulators;
  std::vector<std::unique_ptr<Driver>> drivers;
  std::map<std::string, ReplaySource> recorded;

  explicit Pipeline(ScenarioConfig cfg, const std::map<std::string, ReplaySource>* replay = nullptr)
      : scenario(cfg) {
    ctx.clock = &clock;
    auto emu_cfg = [&](const std::string& name, double rate) {
      EmulatorConfig c;
      c.name = name;
      c.connection = "mem://" + name;
      c.rate_hz = rate;
      c.noise = cfg.noise;
      c.seed = cfg.seed;
      return c;
    };
    emulators.push_back(std::make_unique<GpsEmulator>(ctx, emu_cfg("gps", 10), cfg.world.origin));
    emulators.push_back(std::make_unique<ImuEmulator>(ctx, emu_cfg("imu", 100)));
    emulators.push_back(std::make_unique<LidarEmulator>(ctx, emu_cfg("lidar", 10), cfg.rig.lidar));
    for (auto& e : emulators) {
      const auto& name = e->config().name;
      if (replay) {
        e->attach_source(replay->at(name));
      } else {
        e->attach_source(LiveSource{&scenario});
      }
      e->start();
      e->endpoint()->set_tap([this, name](transport::TapDirection d, Timestamp t, ByteView b) {
        if (d == transport::TapDirection::Outbound) recorded[name].chunks.push_back({t, Bytes(b.begin(), b.end())});
      });
    }
    drivers.push_back(std::make_unique<GpsDriver>(bus, ctx, driver_cfg("gps", "mem://gps", 10)));
    drivers.push_back(std::make_unique<ImuDriver>(bus, ctx, driver_cfg("imu", "mem://imu", 100)));
    drivers.push_back(std::make_unique<LidarDriver>(bus, ctx, driver_cfg("lidar", "mem://lidar", 10)));
    for (auto& d : drivers) d->start();
    auto tick = cfg.tick();
    clock.schedule_every(tick, [this](Timestamp t) { scenario.advance_to(t); });
    for (auto& e : emulators) clock.schedule_every(tick, [&e](Timestamp t) { e->on_tick(t); });
    for (auto& d : drivers) clock.schedule_every(tick, [&d](Timestamp) { d->poll(); });
  }

  void run(Duration d) {
    auto end = clock.now() + d;
    while (clock.now() < end) clock.advance(scenario.config().tick());
  }
};

}  // namespace

TEST(LidarDriver, FirstScanWithinTwoPeriods) {
  Pipeline p(drive_config());
  Capture cap(p.bus, "sensors/lidar/scan");
  p.run(std::chrono::milliseconds(200));
  ASSERT_FALSE(cap.envelopes.empty());
  EXPECT_LE(cap.envelopes.front().publish_time, Timestamp::from_millis(200));
}

TEST(LidarDriver, ReconnectsAfterInjectedDisconnect) {
  Pipeline p(drive_config());
  Capture cap(p.bus, "sensors/lidar/scan");
  p.emulators[2]->endpoint()->inject_fault(transport::DisconnectAt{Timestamp::from_millis(1050)});
  p.run(std::chrono::seconds(3));
  auto& d = *p.drivers[2];
  EXPECT_EQ(d.diagnostics().reconnects, 1u);
  EXPECT_FALSE(d.failed());
  ASSERT_FALSE(cap.envelopes.empty());
  EXPECT_GE(cap.envelopes.back().publish_time, Timestamp::from_millis(2900));
  EXPECT_GE(cap.envelopes.size(), 25u);
}

TEST(Driver, GivesUpAfterBoundedBackoff) {
  Pipeline p(drive_config());
  Capture diag(p.bus, "diagnostics/lidar");
  p.run(std::chrono::milliseconds(500));
  p.emulators[2]->stop();
  p.run(std::chrono::seconds(2));
  auto& d = *p.drivers[2];
  EXPECT_TRUE(d.failed());
  EXPECT_EQ(d.diagnostics().last_error, "reconnect failed after 3 attempts");
  ASSERT_FALSE(diag.envelopes.empty());
  EXPECT_EQ(diagnostics_from_payload(diag.envelopes.back().payload).last_error, d.diagnostics().last_error);
}

TEST(Driver, CountersAccountForEveryFrameWithoutFaults) {
  Pipeline p(drive_config());
  p.run(std::chrono::seconds(5));
  // gps sends two sentences per write
  EXPECT_EQ(p.drivers[0]->diagnostics().frames_ok + p.drivers[0]->diagnostics().frames_dropped,
            2 * p.emulators[0]->frames_sent());
  for (int i : {1, 2}) {
    auto d = p.drivers[i]->diagnostics();
    EXPECT_EQ(d.frames_ok + d.frames_dropped, p.emulators[i]->frames_sent());
    EXPECT_EQ(d.frames_dropped, 0u);
  }
}

TEST(Driver, LiveAndRecordedBytesAreIndistinguishable) {
  auto cfg = drive_config();
  std::vector<Envelope> live_env;
  std::map<std::string, ReplaySource> rec;
  {
    Pipeline live(cfg);
    Capture cap(live.bus, "sensors/*");
    live.run(std::chrono::seconds(4));
    live_env = cap.envelopes;
    rec = live.recorded;
  }
  Pipeline replay(cfg, &rec);
  Capture cap(replay.bus, "sensors/*");
  replay.run(std::chrono::seconds(4));
  ASSERT_GT(live_env.size(), 400u);
  ASSERT_EQ(cap.envelopes.size(), live_env.size());
  for (std::size_t i = 0; i < live_env.size(); ++i) {
    ASSERT_EQ(serialize(cap.envelopes[i]), serialize(live_env[i])) << i;
  }
}
