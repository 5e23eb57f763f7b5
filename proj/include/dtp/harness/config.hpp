#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dtp/scenario/scenario.hpp"
#include "dtp/transport/connection_string.hpp"
#include "dtp/transport/fault.hpp"
#include "dtp/twin/twin.hpp"

namespace dtp::harness {

enum class Sensor { Gps, Imu, Lidar };

inline constexpr Sensor kSensors[] = {Sensor::Gps, Sensor::Imu, Sensor::Lidar};

inline std::string sensor_name(Sensor s) {
  switch (s) {
    case Sensor::Gps: return "gps";
    case Sensor::Imu: return "imu";
    case Sensor::Lidar: return "lidar";
  }
  return "?";
}

/// Where the emulator listens and where the driver dials. An empty driver
/// string means "same as device"; a tcp device on port 0 is resolved to its
/// bound port.
struct Wiring {
  std::string device;
  std::string driver;
};

enum class FaultSide { Device, Driver };

struct FaultConfig {
  Sensor target = Sensor::Gps;
  FaultSide side = FaultSide::Device;
  transport::FaultSpec spec;
  /// Corrupt faults without an explicit seed derive theirs from the run seed.
  bool derive_seed = false;
};

struct ScheduledCommand {
  double at = 0.0;  // s
  std::string command;
};

enum class Comparator { Less, LessEqual, Equal, Within };

struct CheckSpec {
  std::string metric;
  Comparator op = Comparator::LessEqual;
  double threshold = 0.0;
  double tolerance = 0.0;  // Within only
};

struct RunConfig {
  ScenarioConfig scenario;
  Wiring wiring[3];
  std::vector<FaultConfig> faults;
  FilterParams filter;
  CalibrationParams calibration;
  std::vector<ScheduledCommand> commands;
  std::vector<CheckSpec> checks;
  /// Source text the config was parsed from; embedded in recordings.
  std::string text;

  Wiring& wiring_of(Sensor s) { return wiring[static_cast<int>(s)]; }
  const Wiring& wiring_of(Sensor s) const { return wiring[static_cast<int>(s)]; }

  double rate_of(Sensor s) const {
    const auto& r = scenario.rig;
    return s == Sensor::Gps ? r.gps_rate_hz : s == Sensor::Imu ? r.imu_rate_hz : r.lidar_rate_hz;
  }
};

inline std::string comparator_symbol(Comparator c) {
  switch (c) {
    case Comparator::Less: return "<";
    case Comparator::LessEqual: return "<=";
    case Comparator::Equal: return "=";
    case Comparator::Within: return "within";
  }
  return "?";
}

namespace detail {

class Node {
 public:
  Node(YAML::Node n, std::string path) : n_(std::move(n)), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const {
    std::string where = path_.empty() ? "config" : path_;
    if (n_.IsDefined() && n_.Mark().line >= 0) where += " (line " + std::to_string(n_.Mark().line + 1) + ")";
    throw ConfigError(where + ": " + what);
  }

  bool has(const std::string& key) const {
    const YAML::Node& c = n_;
    return c.IsMap() && c[key].IsDefined() && !c[key].IsNull();
  }

  Node operator[](const std::string& key) const {
    const YAML::Node& c = n_;
    if (c.IsDefined() && !c.IsNull() && !c.IsMap()) fail("expected a mapping");
    auto child = c.IsMap() && c[key] ? c[key] : YAML::Node(YAML::NodeType::Undefined);
    return Node(child, path_.empty() ? key : path_ + "." + key);
  }

  /// Rejects keys outside `allowed`, so typos do not silently fall back to defaults.
  void only(std::initializer_list<const char*> allowed) const {
    if (!n_.IsDefined() || n_.IsNull()) return;
    if (!n_.IsMap()) fail("expected a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = n_.begin(); it != n_.end(); ++it) {
      auto k = it->first.as<std::string>();
      if (!ok.contains(k)) Node(it->first, path_).fail("unknown key '" + k + "'");
    }
  }

  template <typename T>
  T as() const {
    if (!n_.IsDefined() || n_.IsNull()) fail("missing value");
    try {
      return n_.as<T>();
    } catch (const YAML::Exception&) {
      fail("invalid value");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (has(key)) out = (*this)[key].as<T>();
  }

  std::vector<Node> items() const {
    if (!n_.IsDefined() || n_.IsNull()) return {};
    if (!n_.IsSequence()) fail("expected a list");
    std::vector<Node> out;
    for (std::size_t i = 0; i < n_.size(); ++i) out.emplace_back(n_[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  std::vector<double> numbers(std::size_t n) const {
    auto it = items();
    if (it.size() != n) fail("expected " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (auto& x : it) out.push_back(x.as<double>());
    return out;
  }

 private:
  YAML::Node n_;
  std::string path_;
};

inline Sensor parse_sensor(const Node& n) {
  auto s = n.as<std::string>();
  for (auto x : kSensors) {
    if (sensor_name(x) == s) return x;
  }
  n.fail("unknown sensor '" + s + "'");
}

inline GridSpec parse_grid(const Node& n) {
  n.only({"origin", "cell_size", "width", "height"});
  GridSpec g;
  if (n.has("origin")) {
    auto o = n["origin"].numbers(2);
    g.origin_x = o[0];
    g.origin_y = o[1];
  }
  n.get("cell_size", g.cell_size);
  n.get("width", g.width);
  n.get("height", g.height);
  return g;
}

/// translation [x, y, z] in metres, angles in degrees.
inline RigidTransform parse_mount(const Node& n, RigidTransform m) {
  n.only({"translation", "yaw_deg", "pitch_deg", "roll_deg"});
  if (n.has("translation")) {
    auto t = n["translation"].numbers(3);
    m.translation = {t[0], t[1], t[2]};
  }
  double yaw = rad_to_deg(m.yaw), pitch = rad_to_deg(m.pitch), roll = rad_to_deg(m.roll);
  n.get("yaw_deg", yaw);
  n.get("pitch_deg", pitch);
  n.get("roll_deg", roll);
  return RigidTransform::from(m.translation, deg_to_rad(yaw), deg_to_rad(pitch), deg_to_rad(roll));
}

inline void parse_world(const Node& n, WorldConfig& w) {
  n.only({"origin", "grid", "heap_region", "boxes", "min_height_fraction"});
  bool region = n.has("heap_region");
  if (n.has("origin")) {
    auto o = n["origin"];
    o.only({"lat", "lon", "alt"});
    o.get("lat", w.origin.latitude);
    o.get("lon", w.origin.longitude);
    o.get("alt", w.origin.altitude);
  }
  if (n.has("grid")) w.grid = parse_grid(n["grid"]);
  w.heap_region = region ? parse_grid(n["heap_region"]) : w.grid;
  if (n.has("boxes")) {
    w.boxes.clear();
    for (auto& b : n["boxes"].items()) {
      b.only({"min", "max", "height"});
      auto lo = b["min"].numbers(2), hi = b["max"].numbers(2);
      w.boxes.push_back({lo[0], lo[1], hi[0], hi[1], b["height"].as<double>()});
    }
  }
  n.get("min_height_fraction", w.min_height_fraction);
}

inline void parse_vehicle(const Node& n, ScenarioConfig& c) {
  n.only({"wheelbase", "max_steer", "max_accel", "lookahead", "footprint", "waypoints"});
  n.get("wheelbase", c.vehicle.wheelbase);
  n.get("max_steer", c.vehicle.max_steer);
  n.get("max_accel", c.vehicle.max_accel);
  n.get("lookahead", c.lookahead);
  if (n.has("footprint")) {
    auto f = n["footprint"];
    f.only({"length", "width", "offset"});
    f.get("length", c.vehicle.footprint.length);
    f.get("width", c.vehicle.footprint.width);
    f.get("offset", c.vehicle.footprint.offset);
  }
  c.waypoints.clear();
  for (auto& w : n["waypoints"].items()) {
    auto v = w.numbers(3);
    c.waypoints.push_back({v[0], v[1], v[2]});
  }
}

inline void parse_rig(const Node& n, RunConfig& rc) {
  n.only({"gps", "imu", "lidar"});
  auto& rig = rc.scenario.rig;
  for (auto s : kSensors) {
    auto name = sensor_name(s);
    auto& wiring = rc.wiring_of(s);
    wiring.device = "mem://" + name;
    if (!n.has(name)) continue;
    auto sn = n[name];
    if (s == Sensor::Lidar) {
      sn.only({"mount", "mount_error_deg", "rate_hz", "device", "driver", "start_angle_deg", "increment_deg", "beams",
               "max_range"});
    } else {
      sn.only({"mount", "rate_hz", "device", "driver"});
    }
    sn.get("device", wiring.device);
    sn.get("driver", wiring.driver);
    auto& mount = s == Sensor::Gps ? rig.gps_mount : s == Sensor::Imu ? rig.imu_mount : rig.lidar_mount;
    if (sn.has("mount")) mount = parse_mount(sn["mount"], mount);
    sn.get("rate_hz", s == Sensor::Gps ? rig.gps_rate_hz : s == Sensor::Imu ? rig.imu_rate_hz : rig.lidar_rate_hz);
    if (s != Sensor::Lidar) continue;
    if (sn.has("mount_error_deg")) {
      auto e = sn["mount_error_deg"];
      e.only({"yaw", "pitch", "roll"});
      double y = 0, p = 0, r = 0;
      e.get("yaw", y);
      e.get("pitch", p);
      e.get("roll", r);
      rig.lidar_mount_error = {deg_to_rad(y), deg_to_rad(p), deg_to_rad(r)};
    }
    if (sn.has("start_angle_deg")) rig.lidar.start_angle = deg_to_rad(sn["start_angle_deg"].as<double>());
    if (sn.has("increment_deg")) rig.lidar.increment = deg_to_rad(sn["increment_deg"].as<double>());
    sn.get("beams", rig.lidar.beam_count);
    sn.get("max_range", rig.lidar.max_range);
  }
}

inline FaultConfig parse_fault(const Node& n) {
  n.only({"target", "side", "type", "probability", "seed", "delay_ms", "at"});
  FaultConfig f;
  f.target = parse_sensor(n["target"]);
  if (n.has("side")) {
    auto side = n["side"].as<std::string>();
    if (side == "device") {
      f.side = FaultSide::Device;
    } else if (side == "driver") {
      f.side = FaultSide::Driver;
    } else {
      n["side"].fail("side must be 'device' or 'driver'");
    }
  }
  auto type = n["type"].as<std::string>();
  if (type == "corrupt") {
    transport::Corrupt c;
    c.probability = n["probability"].as<double>();
    f.derive_seed = !n.has("seed");
    n.get("seed", c.seed);
    f.spec = c;
  } else if (type == "latency") {
    f.spec = transport::Latency{seconds_to_duration(n["delay_ms"].as<double>() * 1e-3)};
  } else if (type == "disconnect") {
    f.spec = transport::DisconnectAt{Timestamp::from_seconds(n["at"].as<double>())};
  } else if (type == "drop_all") {
    f.spec = transport::DropAll{};
  } else {
    n["type"].fail("unknown fault type '" + type + "'");
  }
  try {
    transport::validate(f.spec);
  } catch (const ValidationError& e) {
    n.fail(e.what());
  }
  return f;
}

inline CheckSpec parse_check(const Node& n) {
  n.only({"metric", "op", "threshold", "tolerance"});
  CheckSpec c;
  c.metric = n["metric"].as<std::string>();
  auto op = n["op"].as<std::string>();
  if (op == "<") {
    c.op = Comparator::Less;
  } else if (op == "<=" || op == "≤") {
    c.op = Comparator::LessEqual;
  } else if (op == "=" || op == "==") {
    c.op = Comparator::Equal;
  } else if (op == "within") {
    c.op = Comparator::Within;
    c.tolerance = n["tolerance"].as<double>();
    if (c.tolerance < 0) n["tolerance"].fail("tolerance must be non-negative");
  } else {
    n["op"].fail("unknown comparator '" + op + "'");
  }
  c.threshold = n["threshold"].as<double>();
  return c;
}

}  // namespace detail

inline std::vector<CheckSpec> parse_checks(const YAML::Node& root, const std::string& path) {
  std::vector<CheckSpec> out;
  for (auto& c : detail::Node(root, path).items()) out.push_back(detail::parse_check(c));
  return out;
}

/// Parses a scenario config. Every problem, syntactic or semantic, is a ConfigError.
inline RunConfig parse_config(const std::string& text) {
  RunConfig rc;
  rc.text = text;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  detail::Node n(root, "");
  if (!root.IsMap()) n.fail("expected a mapping at top level");
  n.only({"id", "seed", "tick_dt", "duration", "compaction_k", "world", "vehicle", "rig", "noise", "twin", "faults",
          "commands", "checks"});
  auto& sc = rc.scenario;
  n.get("id", sc.id);
  n.get("seed", sc.seed);
  n.get("tick_dt", sc.tick_dt);
  n.get("duration", sc.duration);
  n.get("compaction_k", sc.compaction_k);
  detail::parse_world(n["world"], sc.world);
  if (n.has("vehicle")) detail::parse_vehicle(n["vehicle"], sc);
  detail::parse_rig(n["rig"], rc);
  if (n.has("noise")) {
    auto nn = n["noise"];
    nn.only({"gps_sigma", "gyro_bias", "gyro_sigma", "lidar_sigma", "lidar_dropout"});
    nn.get("gps_sigma", sc.noise.gps_sigma);
    nn.get("gyro_bias", sc.noise.gyro_bias);
    nn.get("gyro_sigma", sc.noise.gyro_sigma);
    nn.get("lidar_sigma", sc.noise.lidar_sigma);
    nn.get("lidar_dropout", sc.noise.lidar_dropout);
  }
  if (n.has("twin")) {
    auto t = n["twin"];
    t.only({"alpha", "beta", "v_min", "gps_timeout", "calibration_min_scans", "calibration_max_residual"});
    t.get("alpha", rc.filter.alpha);
    t.get("beta", rc.filter.beta);
    t.get("v_min", rc.filter.v_min);
    t.get("gps_timeout", rc.filter.gps_timeout);
    t.get("calibration_min_scans", rc.calibration.min_scans);
    t.get("calibration_max_residual", rc.calibration.max_residual);
  }
  for (auto& f : n["faults"].items()) rc.faults.push_back(detail::parse_fault(f));
  for (auto& c : n["commands"].items()) {
    c.only({"at", "command"});
    rc.commands.push_back({c["at"].as<double>(), c["command"].as<std::string>()});
    if (rc.commands.back().at < 0) c.fail("command time must be non-negative");
  }
  rc.checks = parse_checks(root["checks"], "checks");

  try {
    sc.validate();
    rc.filter.validate();
    for (const auto& f : rc.faults) {
      // arrival stamps must land on tick boundaries for recordings to replay exactly
      auto l = std::get_if<transport::Latency>(&f.spec);
      if (l && l->delay.count() % sc.tick().count() != 0) throw ValidationError("latency must be a multiple of tick_dt");
    }
    for (auto s : kSensors) {
      transport::ConnectionString::parse(rc.wiring_of(s).device);
      if (!rc.wiring_of(s).driver.empty()) transport::ConnectionString::parse(rc.wiring_of(s).driver);
    }
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return rc;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

/// Separate checks file: a YAML list, or a mapping with a `checks` list.
inline std::vector<CheckSpec> load_checks(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::Load(read_text_file(path));
  } catch (const YAML::Exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (root.IsMap()) {
    detail::Node(root, path).only({"checks"});
    return parse_checks(root["checks"], path + ".checks");
  }
  return parse_checks(root, path);
}

/// --seed beats DTP_SEED beats the config file.
inline std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> cli, const char* env) {
  if (cli) return *cli;
  if (env && *env) {
    std::uint64_t v = 0;
    std::string_view s(env);
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("DTP_SEED is not an unsigned integer");
    return v;
  }
  return config_seed;
}

}  // namespace dtp::harness
