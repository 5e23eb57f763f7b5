#include <random>

#include <gtest/gtest.h>

#include "dtp/drivers/nmea_parser.hpp"
#include "dtp/emulators/emulator.hpp"
#include "dtp/emulators/nmea_encoder.hpp"
#include "dtp/scenario/scenario.hpp"
#include "dtp/twin/twin.hpp"

using namespace dtp;

namespace {

GpsFix through_wire(const GpsFix& f) {
  nmea::FixAssembler a;
  std::optional<GpsFix> out;
  auto text = nmea::encode(f);
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto p = nmea::parse_line(std::string_view(text).substr(start, nl - start));
    if (auto fx = a.push(p)) out = fx;
    start = nl + 1;
  }
  return *out;
}

ImuSample imu_truth(const Scenario& sc, double gyro_bias = 0.0) {
  auto [acc, gyro] = sc.truth_imu();
  return imu_from_si(sc.now(), {acc.x(), acc.y(), acc.z()}, {gyro.x(), gyro.y(), gyro.z() + gyro_bias}, true);
}

LidarScan scan_truth(const Scenario& sc, const ScanGeometry& geometry, std::uint32_t id = 0) {
  auto g = LidarEmulator::quantize(geometry);
  LidarScan s;
  s.time = sc.now();
  s.scan_id = id;
  s.start_angle_urad = static_cast<std::int32_t>(std::llround(g.start_angle * 1e6));
  s.increment_urad = static_cast<std::uint32_t>(std::llround(g.increment * 1e6));
  for (double r : sc.truth_lidar(g)) {
    s.ranges_mm.push_back(r > g.max_range ? 0 : static_cast<std::uint16_t>(std::llround(r * 1000)));
  }
  return s;
}

ScenarioConfig straight_drive() {
  ScenarioConfig cfg;
  cfg.world.boxes.clear();
  cfg.world.grid = GridSpec{-20, -20, 0.5, 160, 80};
  cfg.waypoints = {{-10, 3, 1.5}, {60, 3, 1.5}};
  return cfg;
}

}  // namespace

TEST(PoseFilter, StraightDriveConverges) {
  auto cfg = straight_drive();
  Scenario sc(cfg);
  PoseFilter f(cfg.world.origin, {}, cfg.rig.gps_mount.translation);
  double worst_yaw = 0, sum_pos2 = 0;
  int n = 0;
  for (int k = 1; k <= 2000; ++k) {
    sc.tick();
    f.on_imu(imu_truth(sc));
    if (k % 10 == 0) f.on_gps(through_wire(sc.truth_gps()));
    if (sc.now() < Timestamp::from_seconds(5)) continue;
    auto e = f.estimate();
    worst_yaw = std::max(worst_yaw, std::abs(normalize_angle(e.yaw - sc.state().pose.yaw)));
    Vec3 d = e.position - sc.state().pose.translation;
    sum_pos2 += d.x() * d.x() + d.y() * d.y();
    ++n;
  }
  EXPECT_LT(worst_yaw, 0.01);
  EXPECT_LT(std::sqrt(sum_pos2 / n), 0.05);
}

TEST(PoseFilter, StationaryGpsKeepsYaw) {
  GeoCoordinate origin{54, 10, 0};
  PoseFilter f(origin);
  GpsFix fix;
  fix.quality = 1;
  fix.satellites = 8;
  fix.hdop = 1;
  fix.position = origin;
  fix.speed_mps = 0.1;
  fix.course_deg = 45;
  for (int i = 1; i <= 50; ++i) {
    fix.time = Timestamp::from_millis(100 * i);
    f.on_gps(fix);
  }
  EXPECT_EQ(f.estimate().yaw, 0.0);
}

TEST(PoseFilter, GyroBiasSteadyStateMatchesFixedPoint) {
  const double b = deg_to_rad(0.5);  // rad/s
  const double T = 0.1, alpha = 0.1;
  auto cfg = straight_drive();
  Scenario sc(cfg);
  PoseFilter f(cfg.world.origin, {}, cfg.rig.gps_mount.translation);
  for (int k = 1; k <= 3000; ++k) {
    sc.tick();
    f.on_imu(imu_truth(sc, b));
    if (k % 10 == 0) f.on_gps(through_wire(sc.truth_gps()));
  }
  // just after a fix: e = (1 - alpha)(e + b T)  =>  e* = (1 - alpha) b T / alpha
  double oracle = (1 - alpha) * b * T / alpha;
  double err = normalize_angle(f.estimate().yaw - sc.state().pose.yaw);
  // gyro wire quantization is 0.1 deg/s; 0.5 deg/s bias is exact on the wire
  EXPECT_NEAR(err, oracle, 2e-4);
  EXPECT_LE(std::abs(err), b / alpha);
}

TEST(PoseFilter, DegradedWithoutFix) {
  GeoCoordinate origin{54, 10, 0};
  PoseFilter f(origin);
  GpsFix fix;
  fix.quality = 1;
  fix.satellites = 8;
  fix.hdop = 1;
  fix.position = origin;
  fix.time = Timestamp::from_seconds(1);
  f.on_gps(fix);
  EXPECT_FALSE(f.estimate().degraded);
  auto sigma0 = f.estimate().position_sigma;
  ImuSample s;
  s.time = Timestamp::from_seconds(4);
  f.on_imu(s);
  EXPECT_TRUE(f.estimate().degraded);
  EXPECT_GT(f.estimate().position_sigma, sigma0);
}

TEST(IngestScan, StraightDownBeamWithIdentityTransforms) {
  LidarScan s;
  s.start_angle_urad = -1570796;
  s.increment_urad = 1000;
  s.ranges_mm = {2500, 0};
  auto pts = scan_to_points(s, RigidTransform::identity(), RigidTransform::identity());
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].x(), 0.0, 1e-12);
  EXPECT_NEAR(pts[0].y(), 0.0, 2e-6);
  EXPECT_NEAR(pts[0].z(), -2.5, 1e-9);
}

TEST(IngestScan, FlatGroundPointsWithinFiveMillimetres) {
  auto cfg = straight_drive();
  cfg.rig.lidar_mount = RigidTransform::from({1.0, 0.0, 3.0}, 0.0, deg_to_rad(-15), deg_to_rad(3));
  Scenario sc(cfg);
  std::size_t n = 0;
  for (int k = 1; k <= 300; ++k) {
    sc.tick();
    if (k % 10) continue;
    for (auto& p : scan_to_points(scan_truth(sc, cfg.rig.lidar), sc.state().pose, cfg.rig.lidar_mount)) {
      ASSERT_LE(std::abs(p.z()), 5e-3);
      ++n;
    }
  }
  EXPECT_GT(n, 5000u);
}

TEST(Surface, RunningMeanAndSkips) {
  ReconstructionGrid g(GridSpec{0, 0, 1, 2, 2});
  update_surface(g, {{0.5, 0.5, 2.0}});
  EXPECT_EQ(g.height({0, 0}), 2.0);
  EXPECT_EQ(g.count({0, 0}), 1u);
  update_surface(g, {{1.5, 0.5, 1.0}, {1.2, 0.1, 3.0}});
  EXPECT_EQ(g.height({1, 0}), 2.0);
  EXPECT_EQ(g.count({1, 0}), 2u);
  auto before = g.heights();
  update_surface(g, {{5, 5, 1}});
  EXPECT_EQ(g.heights(), before);
  EXPECT_EQ(g.skipped(), 1u);
}

TEST(Volume, PrismEmptyAndHalf) {
  GridSpec spec{0, 0, 0.5, 20, 20};
  ReconstructionGrid g(spec);
  EXPECT_EQ(estimate_volume(g).volume, 0.0);
  EXPECT_EQ(estimate_volume(g).observed_fraction, 0.0);
  for (int iy = 0; iy < 20; ++iy) {
    for (int ix = 0; ix < 10; ++ix) g.add({spec.center_x(ix), spec.center_y(iy), 2.0});
  }
  EXPECT_DOUBLE_EQ(estimate_volume(g).volume, 100.0);
  EXPECT_DOUBLE_EQ(estimate_volume(g).observed_fraction, 0.5);
  for (int iy = 0; iy < 20; ++iy) {
    for (int ix = 10; ix < 20; ++ix) g.add({spec.center_x(ix), spec.center_y(iy), 2.0});
  }
  EXPECT_DOUBLE_EQ(estimate_volume(g).volume, 200.0);
  EXPECT_DOUBLE_EQ(estimate_volume(g).observed_fraction, 1.0);
}

TEST(Volume, InvariantUnderScanOrderWithinEpoch) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 10), h(1.5, 2.5);
  std::vector<std::vector<Vec3>> scans(8);
  for (auto& s : scans) {
    for (int i = 0; i < 300; ++i) s.push_back({u(rng), u(rng), h(rng)});
  }
  ReconstructionGrid a(GridSpec{0, 0, 0.5, 20, 20}), b(GridSpec{0, 0, 0.5, 20, 20});
  for (auto& s : scans) update_surface(a, s);
  std::shuffle(scans.begin(), scans.end(), rng);
  for (auto& s : scans) update_surface(b, s);
  EXPECT_NEAR(estimate_volume(a).volume, estimate_volume(b).volume, 1e-9);
}

TEST(Coverage, StraightLingerAndRepeat) {
  GridSpec spec{0, 0, 0.5, 40, 10};
  CoverageMap m(spec, Footprint{1.0, 1.0, 0.0});
  auto drive = [&] {
    for (double x = -1; x < 21; x += 0.05) m.update(RigidTransform::from({x, 2.5, 0}, 0));
  };
  drive();
  for (int ix = 0; ix < 40; ++ix) EXPECT_EQ(m.passes()[spec.index({ix, 5})], 1);
  for (int i = 0; i < 100; ++i) m.update(RigidTransform::from({30, 30, 0}, 0));
  auto snapshot = m.passes();
  for (int i = 0; i < 100; ++i) m.update(RigidTransform::from({30, 30, 0}, 0));
  EXPECT_EQ(m.passes(), snapshot);
  drive();
  EXPECT_EQ(m.passes()[spec.index({12, 5})], 2);
}

TEST(Coverage, MatchesScenarioPassCountsUnderTruePoses) {
  ScenarioConfig cfg;
  cfg.waypoints = {{-6, 2.5, 1.5}, {16, 2.5, 1.5}, {22, 5.0, 1.5}, {16, 7.5, 1.5}, {-6, 7.5, 1.5}};
  cfg.world.grid = GridSpec{0, 0, 0.5, 20, 20};
  Scenario sc(cfg);
  CoverageMap m(cfg.world.grid, cfg.vehicle.footprint);
  m.update(sc.state().pose);
  for (int i = 0; i < 5000; ++i) {
    sc.tick();
    m.update(sc.state().pose);
  }
  std::vector<int> twin(m.passes().begin(), m.passes().end());
  EXPECT_EQ(twin, sc.pass_counts());
  EXPECT_GT(*std::max_element(twin.begin(), twin.end()), 0);
}

TEST(Calibration, LateralOffsetLaw) {
  // a point 10 m ahead seen through a mount yawed by 1 degree
  auto m = RigidTransform::from(Vec3::Zero(), deg_to_rad(1.0));
  Vec3 p = m.apply({10.0, 0.0, 0.0});
  double oracle = 10.0 * std::tan(deg_to_rad(1.0));
  EXPECT_NEAR(oracle, 0.1746, 1e-4);
  EXPECT_NEAR(p.y() / p.x() * 10.0, oracle, 1e-12);
}

namespace {

/// Flat pad with a long vertical reference fence 4 m left of a straight lane.
ScenarioConfig calibration_site(EulerAngles error) {
  ScenarioConfig cfg;
  cfg.world.grid = GridSpec{-10, 4.0, 0.2, 200, 1};
  cfg.world.boxes = {{-10, 4.0, 30, 4.2, 4.0}};
  cfg.world.heap_region = cfg.world.grid;
  cfg.compaction_k = 1.0;
  cfg.waypoints = {{-2, 0, 1.0}, {40, 0, 1.0}};
  cfg.rig.lidar_mount = RigidTransform::from({1.0, 0.0, 2.5}, 0.0, deg_to_rad(-20), 0.0);
  cfg.rig.lidar.max_range = 20.0;
  cfg.rig.lidar_mount_error = error;
  return cfg;
}

std::vector<CalibrationSample> collect(const ScenarioConfig& cfg, double seconds = 20) {
  Scenario sc(cfg);
  std::vector<CalibrationSample> out;
  std::uint32_t id = 0;
  while (sc.now() < Timestamp::from_seconds(seconds)) {
    sc.tick();
    if (sc.now().ns % 100'000'000ULL) continue;
    if (sc.now() < Timestamp::from_seconds(2)) continue;
    out.push_back({scan_truth(sc, cfg.rig.lidar, id++), sc.state().pose});
  }
  return out;
}

double deg_err(double a, double b) { return std::abs(rad_to_deg(normalize_angle(a - b))); }

}  // namespace

TEST(Calibration, RecoversInjectedRollAndPitch) {
  EulerAngles err;
  err.roll = deg_to_rad(2.0);
  err.pitch = deg_to_rad(1.0);
  auto cfg = calibration_site(err);
  auto cal = calibrate_mount(collect(cfg), cfg.rig.lidar_mount);
  auto truth = cfg.rig.lidar_truth_mount();
  EXPECT_LT(deg_err(cal.mount.roll, truth.roll), 0.1);
  EXPECT_LT(deg_err(cal.mount.pitch, truth.pitch), 0.1);
  EXPECT_LT(deg_err(cal.mount.yaw, truth.yaw), 0.5);
}

TEST(Calibration, RecoversInjectedYaw) {
  EulerAngles err;
  err.yaw = deg_to_rad(1.0);
  auto cfg = calibration_site(err);
  auto cal = calibrate_mount(collect(cfg), cfg.rig.lidar_mount);
  EXPECT_LT(deg_err(cal.mount.yaw, cfg.rig.lidar_truth_mount().yaw), 0.5);
}

TEST(Calibration, NullCaseIsIdentity) {
  auto cfg = calibration_site({});
  auto cal = calibrate_mount(collect(cfg), cfg.rig.lidar_mount);
  EXPECT_LT(deg_err(cal.mount.roll, cfg.rig.lidar_mount.roll), 0.05);
  EXPECT_LT(deg_err(cal.mount.pitch, cfg.rig.lidar_mount.pitch), 0.05);
  EXPECT_LT(deg_err(cal.mount.yaw, cfg.rig.lidar_mount.yaw), 0.05);
  EXPECT_LT(cal.residual_rms, 2e-3);
}

TEST(Calibration, RejectsInsufficientInput) {
  auto cfg = calibration_site({});
  auto samples = collect(cfg, 4);
  EXPECT_THROW(calibrate_mount(samples, cfg.rig.lidar_mount), CalibrationError);
  auto flat = cfg;
  flat.rig.lidar_mount.pitch = 0.0;
  EXPECT_THROW(calibrate_mount(collect(flat), flat.rig.lidar_mount), CalibrationError);
  auto no_fence = cfg;
  no_fence.world.boxes.clear();
  EXPECT_THROW(calibrate_mount(collect(no_fence), no_fence.rig.lidar_mount), CalibrationError);
}

TEST(TwinService, PublishesStateAtOneHertzAndHandlesCommands) {
  Bus bus;
  VirtualClock clock;
  TwinConfig cfg;
  cfg.origin = {54, 10, 0};
  cfg.grid = GridSpec{0, 0, 0.5, 20, 20};
  Twin twin(bus, clock, cfg);
  std::vector<TwinState> states;
  bus.subscribe("twin/state", [&](const Envelope& e) { states.push_back(twin_state_from_payload(e.payload)); });
  auto cmd = bus.advertise("twin/command", kinds::kTwinCommand);
  clock.schedule_every(std::chrono::milliseconds(10), [&](Timestamp t) { twin.on_tick(t); });
  clock.advance(std::chrono::milliseconds(3500));
  ASSERT_EQ(states.size(), 3u);
  EXPECT_EQ(states[2].t, Timestamp::from_seconds(3));
  EXPECT_EQ(to_payload(twin_state_from_payload(to_payload(states[1]))), to_payload(states[1]));
  cmd.publish(clock.now(), to_bytes("calibrate"));
  clock.advance(std::chrono::milliseconds(10));
  EXPECT_EQ(twin.counters().calibration_failures, 1u);
  EXPECT_NE(twin.last_error().find("at least 30 scans"), std::string::npos);
  cmd.publish(clock.now(), to_bytes("reset"));
  clock.advance(std::chrono::milliseconds(10));
  EXPECT_FALSE(twin.filter().initialized());
}
