#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtp/drivers/driver.hpp"
#include "dtp/harness/config.hpp"
#include "dtp/twin/twin.hpp"

namespace dtp::harness {

inline constexpr const char* kReportSchema = "dtp.run_report/1";

struct DriverReport {
  std::string name;
  DriverDiagnostics diagnostics;

  bool operator==(const DriverReport&) const = default;
};

struct CheckResult {
  CheckSpec spec;
  std::optional<double> value;
  bool passed = false;
  std::string detail;

  bool operator==(const CheckResult& o) const {
    return spec.metric == o.spec.metric && spec.op == o.spec.op && spec.threshold == o.spec.threshold &&
           spec.tolerance == o.spec.tolerance && value == o.value && passed == o.passed && detail == o.detail;
  }
};

enum class ExitCode : int { Pass = 0, CheckFailed = 1, ConfigError = 2, RuntimeFailure = 3 };

struct RunReport {
  std::string mode = "live";  // live | replay
  std::string scenario_id;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  double virtual_seconds = 0.0;
  std::string failure;
  std::vector<DriverReport> drivers;
  std::optional<TwinState> final_state;
  std::map<std::string, double> metrics;
  std::string determinism_hash;
  std::uint64_t envelopes = 0;
  std::optional<bool> replay_match;
  std::vector<CheckResult> checks;
  int exit_code = 0;

  bool operator==(const RunReport&) const = default;
};

/// Every metric a run can report. Per-driver counters follow the pattern
/// `<sensor>_<counter>`.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {
        "volume_truth_m3",
        "volume_estimate_m3",
        "volume_error_pct",
        "volume_truth_observed_m3",
        "volume_error_resampled_pct",
        "volume_truth_increases",
        "observed_fraction",
        "pose_rms_error_m",
        "yaw_rms_error_deg",
        "pose_samples",
        "scans_ingested",
        "scans_stale",
        "calibrations",
        "calibration_roll_error_deg",
        "calibration_pitch_error_deg",
        "calibration_yaw_error_deg",
        "calibration_residual_m",
    };
    for (auto s : kSensors) {
      for (auto c : {"frames_ok", "frames_dropped", "resyncs", "reconnects"}) n.push_back(sensor_name(s) + "_" + c);
    }
    return n;
  }();
  return names;
}

inline bool is_known_metric(const std::string& name) {
  const auto& n = metric_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

/// Throws ConfigError on a metric name outside the report schema. A known
/// metric missing from this particular report fails its check.
inline std::vector<CheckResult> evaluate_checks(const RunReport& report, const std::vector<CheckSpec>& checks) {
  for (const auto& c : checks) {
    if (!is_known_metric(c.metric)) throw ConfigError("checks: unknown metric '" + c.metric + "'");
  }
  std::vector<CheckResult> out;
  for (const auto& c : checks) {
    CheckResult r;
    r.spec = c;
    auto it = report.metrics.find(c.metric);
    if (it == report.metrics.end()) {
      r.detail = "metric not available in this run";
      out.push_back(r);
      continue;
    }
    double v = it->second;
    r.value = v;
    switch (c.op) {
      case Comparator::Less: r.passed = v < c.threshold; break;
      case Comparator::LessEqual: r.passed = v <= c.threshold; break;
      case Comparator::Equal: r.passed = v == c.threshold; break;
      case Comparator::Within: r.passed = std::abs(v - c.threshold) <= c.tolerance; break;
    }
    std::ostringstream d;
    d.precision(10);
    d << "measured " << v;
    r.detail = d.str();
    out.push_back(r);
  }
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& r) {
  return std::all_of(r.begin(), r.end(), [](const CheckResult& c) { return c.passed; });
}

namespace detail {

using Json = nlohmann::ordered_json;

inline Json state_to_json(const TwinState& s) {
  Json p;
  p["t_ns"] = s.pose.t.ns;
  p["x"] = s.pose.position.x();
  p["y"] = s.pose.position.y();
  p["z"] = s.pose.position.z();
  p["yaw"] = s.pose.yaw;
  p["position_sigma"] = s.pose.position_sigma;
  p["yaw_sigma"] = s.pose.yaw_sigma;
  p["speed"] = s.pose.speed;
  p["degraded"] = s.pose.degraded;
  Json j;
  j["t_ns"] = s.t.ns;
  j["pose"] = p;
  j["volume"] = s.volume;
  j["observed_fraction"] = s.observed_fraction;
  j["coverage"] = s.coverage;
  return j;
}

inline TwinState state_from_json(const Json& j) {
  TwinState s;
  s.t.ns = j.at("t_ns").get<std::uint64_t>();
  const auto& p = j.at("pose");
  s.pose.t.ns = p.at("t_ns").get<std::uint64_t>();
  s.pose.position = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>()};
  s.pose.yaw = p.at("yaw").get<double>();
  s.pose.position_sigma = p.at("position_sigma").get<double>();
  s.pose.yaw_sigma = p.at("yaw_sigma").get<double>();
  s.pose.speed = p.at("speed").get<double>();
  s.pose.degraded = p.at("degraded").get<bool>();
  s.volume = j.at("volume").get<double>();
  s.observed_fraction = j.at("observed_fraction").get<double>();
  s.coverage = j.at("coverage").get<std::vector<std::uint16_t>>();
  return s;
}

inline Comparator comparator_from(const std::string& s) {
  for (auto c : {Comparator::Less, Comparator::LessEqual, Comparator::Equal, Comparator::Within}) {
    if (comparator_symbol(c) == s) return c;
  }
  throw ConfigError("report: unknown comparator " + s);
}

}  // namespace detail

inline std::string report_to_json(const RunReport& r) {
  detail::Json j;
  j["schema"] = kReportSchema;
  j["mode"] = r.mode;
  j["scenario"] = r.scenario_id;
  j["seed"] = r.seed;
  j["wall_seconds"] = r.wall_seconds;
  j["virtual_seconds"] = r.virtual_seconds;
  j["failure"] = r.failure;
  j["drivers"] = detail::Json::array();
  for (const auto& d : r.drivers) {
    detail::Json dj;
    dj["name"] = d.name;
    dj["frames_ok"] = d.diagnostics.frames_ok;
    dj["frames_dropped"] = d.diagnostics.frames_dropped;
    dj["resyncs"] = d.diagnostics.resyncs;
    dj["reconnects"] = d.diagnostics.reconnects;
    dj["last_error"] = d.diagnostics.last_error;
    j["drivers"].push_back(dj);
  }
  j["final_state"] = r.final_state ? detail::state_to_json(*r.final_state) : detail::Json();
  j["metrics"] = detail::Json::object();
  for (const auto& [k, v] : r.metrics) j["metrics"][k] = v;
  j["determinism_hash"] = r.determinism_hash;
  j["envelopes"] = r.envelopes;
  j["replay_match"] = r.replay_match ? detail::Json(*r.replay_match) : detail::Json();
  j["checks"] = detail::Json::array();
  for (const auto& c : r.checks) {
    detail::Json cj;
    cj["metric"] = c.spec.metric;
    cj["op"] = comparator_symbol(c.spec.op);
    cj["threshold"] = c.spec.threshold;
    cj["tolerance"] = c.spec.tolerance;
    cj["value"] = c.value ? detail::Json(*c.value) : detail::Json();
    cj["passed"] = c.passed;
    cj["detail"] = c.detail;
    j["checks"].push_back(cj);
  }
  j["exit_code"] = r.exit_code;
  return j.dump(2) + "\n";
}

inline RunReport report_from_json(const std::string& text) {
  auto j = detail::Json::parse(text);
  if (j.at("schema") != kReportSchema) throw ConfigError("report: unsupported schema");
  RunReport r;
  r.mode = j.at("mode").get<std::string>();
  r.scenario_id = j.at("scenario").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.virtual_seconds = j.at("virtual_seconds").get<double>();
  r.failure = j.at("failure").get<std::string>();
  for (const auto& dj : j.at("drivers")) {
    DriverReport d;
    d.name = dj.at("name").get<std::string>();
    d.diagnostics.frames_ok = dj.at("frames_ok").get<std::uint64_t>();
    d.diagnostics.frames_dropped = dj.at("frames_dropped").get<std::uint64_t>();
    d.diagnostics.resyncs = dj.at("resyncs").get<std::uint64_t>();
    d.diagnostics.reconnects = dj.at("reconnects").get<std::uint64_t>();
    d.diagnostics.last_error = dj.at("last_error").get<std::string>();
    r.drivers.push_back(d);
  }
  if (!j.at("final_state").is_null()) r.final_state = detail::state_from_json(j.at("final_state"));
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  r.determinism_hash = j.at("determinism_hash").get<std::string>();
  r.envelopes = j.at("envelopes").get<std::uint64_t>();
  if (!j.at("replay_match").is_null()) r.replay_match = j.at("replay_match").get<bool>();
  for (const auto& cj : j.at("checks")) {
    CheckResult c;
    c.spec.metric = cj.at("metric").get<std::string>();
    c.spec.op = detail::comparator_from(cj.at("op").get<std::string>());
    c.spec.threshold = cj.at("threshold").get<double>();
    c.spec.tolerance = cj.at("tolerance").get<double>();
    if (!cj.at("value").is_null()) c.value = cj.at("value").get<double>();
    c.passed = cj.at("passed").get<bool>();
    c.detail = cj.at("detail").get<std::string>();
    r.checks.push_back(c);
  }
  r.exit_code = j.at("exit_code").get<int>();
  return r;
}

inline std::string report_to_text(const RunReport& r) {
  std::ostringstream o;
  o.precision(10);
  o << "scenario " << r.scenario_id << " (" << r.mode << ", seed " << r.seed << ")\n";
  o << "virtual " << r.virtual_seconds << " s, wall " << r.wall_seconds << " s\n";
  if (!r.failure.empty()) o << "failure: " << r.failure << "\n";
  for (const auto& d : r.drivers) {
    const auto& g = d.diagnostics;
    o << "driver " << d.name << ": ok " << g.frames_ok << ", dropped " << g.frames_dropped << ", resyncs " << g.resyncs
      << ", reconnects " << g.reconnects;
    if (!g.last_error.empty()) o << ", last error: " << g.last_error;
    o << "\n";
  }
  if (r.final_state) {
    o << "twin volume " << r.final_state->volume << " m3, observed " << r.final_state->observed_fraction << "\n";
  }
  for (const auto& [k, v] : r.metrics) o << "metric " << k << " = " << v << "\n";
  o << "determinism hash " << r.determinism_hash << " over " << r.envelopes << " envelopes\n";
  if (r.replay_match) o << "replay " << (*r.replay_match ? "matches" : "DIFFERS from") << " recorded twin/state\n";
  for (const auto& c : r.checks) {
    o << (c.passed ? "PASS " : "FAIL ") << c.spec.metric << " " << comparator_symbol(c.spec.op) << " "
      << c.spec.threshold;
    if (c.spec.op == Comparator::Within) o << " +/- " << c.spec.tolerance;
    o << ": " << c.detail << "\n";
  }
  o << "exit " << r.exit_code << "\n";
  return o.str();
}

}  // namespace dtp::harness
