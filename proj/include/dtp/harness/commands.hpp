#pragma once

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dtp/harness/run.hpp"

namespace dtp::harness {

enum class ReportFormat { Json, Text };

inline std::string format_report(const RunReport& r, ReportFormat f) {
  return f == ReportFormat::Json ? report_to_json(r) : report_to_text(r);
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string record;
  ReportFormat format = ReportFormat::Text;
  bool realtime = false;
  std::string checks;  // test only
};

namespace detail {

inline RunConfig prepare(const RunArgs& a) {
  auto cfg = load_config(a.config);
  cfg.scenario.seed = resolve_seed(cfg.scenario.seed, a.seed, std::getenv("DTP_SEED"));
  return cfg;
}

inline int config_error(std::ostream& err, const std::exception& e) {
  err << "configuration error: " << e.what() << "\n";
  return static_cast<int>(ExitCode::ConfigError);
}

inline RunOptions options(const RunArgs& a) {
  RunOptions o;
  o.record = !a.record.empty();
  o.record_path = a.record;
  o.realtime = a.realtime;
  return o;
}

}  // namespace detail

/// `dtp run`: executes the scenario and prints its report. Checks are not enforced.
inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = detail::prepare(a);
  } catch (const ConfigError& e) {
    return detail::config_error(err, e);
  }
  auto result = run_scenario(cfg, detail::options(a));
  out << format_report(result.report, a.format);
  if (!result.report.failure.empty()) err << "runtime failure: " << result.report.failure << "\n";
  return result.report.exit_code;
}

/// `dtp test`: runs and evaluates checks from the config, or from the
/// checks file when one is given.
inline int cmd_test(const RunArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = detail::prepare(a);
    if (!a.checks.empty()) cfg.checks = load_checks(a.checks);
    for (const auto& c : cfg.checks) {
      if (!is_known_metric(c.metric)) throw ConfigError("checks: unknown metric '" + c.metric + "'");
    }
  } catch (const ConfigError& e) {
    return detail::config_error(err, e);
  }
  auto result = run_scenario(cfg, detail::options(a));
  auto& report = result.report;
  report.checks = evaluate_checks(report, cfg.checks);
  if (report.exit_code == 0 && !all_passed(report.checks)) report.exit_code = static_cast<int>(ExitCode::CheckFailed);
  out << format_report(report, a.format);
  if (!report.failure.empty()) err << "runtime failure: " << report.failure << "\n";
  for (const auto& c : report.checks) {
    if (!c.passed) err << "check failed: " << c.spec.metric << " (" << c.detail << ")\n";
  }
  return report.exit_code;
}

struct ReplayArgs {
  std::string log;
  std::string config;  // overrides the config embedded in the log
  ReportFormat format = ReportFormat::Text;
};

/// `dtp replay`: exit 0 when the twin/state stream is reproduced exactly, 1 otherwise.
inline int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  ReplayInput input;
  RunConfig cfg;
  try {
    input = replay_input(replay::read_log(a.log));
    if (!a.config.empty()) {
      cfg = load_config(a.config);
    } else if (!input.config_text.empty()) {
      cfg = parse_config(input.config_text);
    } else {
      throw ConfigError(a.log + ": no embedded config; pass --config");
    }
  } catch (const Error& e) {
    return detail::config_error(err, e);
  }
  auto result = replay_recording(cfg, input);
  out << format_report(result.report, a.format);
  if (!result.report.failure.empty()) err << "runtime failure: " << result.report.failure << "\n";
  return result.report.exit_code;
}

struct SliceArgs {
  std::string log;
  double from = 0.0;  // s
  double to = 0.0;    // s, exclusive
  std::vector<std::string> channels;  // empty: all
  std::string out;
};

inline std::string default_slice_path(const std::string& log) {
  auto dot = log.rfind(".dtpl");
  return (dot == std::string::npos ? log : log.substr(0, dot)) + ".slice.dtpl";
}

inline int cmd_slice(const SliceArgs& a, std::ostream& out, std::ostream& err) {
  try {
    auto log = replay::read_log(a.log);
    auto selected = replay::all_channels(log);
    if (!a.channels.empty()) {
      selected.clear();
      for (const auto& name : a.channels) {
        auto id = log.channel_id(name);
        if (!id) throw ConfigError("unknown channel '" + name + "' in " + a.log);
        selected.insert(*id);
      }
    }
    if (a.from < 0 || a.to < a.from) throw ConfigError("slice window must satisfy 0 <= from <= to");
    auto sliced = replay::log_slice(log, Timestamp::from_seconds(a.from), Timestamp::from_seconds(a.to), selected);
    auto path = a.out.empty() ? default_slice_path(a.log) : a.out;
    replay::write_log(path, sliced);
    out << "wrote " << sliced.records.size() << " records on " << sliced.channels.size() << " channels to " << path
        << "\n";
    return 0;
  } catch (const Error& e) {
    return detail::config_error(err, e);
  }
}

}  // namespace dtp::harness
