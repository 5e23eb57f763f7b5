#include <iostream>

#include "CLI11.hpp"

#include "dtp/harness/commands.hpp"

using namespace dtp::harness;

int main(int argc, char** argv) {
  CLI::App app{"Digital twin prototype harness"};
  app.require_subcommand(1);

  const std::map<std::string, ReportFormat> formats{{"json", ReportFormat::Json}, {"text", ReportFormat::Text}};

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a scenario and print its report");
  run->add_option("config", run_args.config, "Scenario config (YAML)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_args.seed, "Seed; overrides DTP_SEED and the config");
  run->add_option("--record", run_args.record, "Write a recording to this file");
  run->add_option("--report", run_args.format, "Report format")->transform(CLI::CheckedTransformer(formats));
  run->add_flag("--realtime", run_args.realtime, "Pace the clock by wall time");

  RunArgs test_args;
  auto* test = app.add_subcommand("test", "Run a scenario and evaluate its checks");
  test->add_option("config", test_args.config, "Scenario config (YAML)")->required()->check(CLI::ExistingFile);
  test->add_option("--checks", test_args.checks, "Checks file replacing the config's checks")->check(CLI::ExistingFile);
  test->add_option("--seed", test_args.seed, "Seed; overrides DTP_SEED and the config");
  test->add_option("--record", test_args.record, "Write a recording to this file");
  test->add_option("--report", test_args.format, "Report format")->transform(CLI::CheckedTransformer(formats));

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "Re-drive drivers and twin from a recording");
  replay->add_option("log", replay_args.log, "Recording")->required()->check(CLI::ExistingFile);
  replay->add_option("--config", replay_args.config, "Config replacing the embedded one")->check(CLI::ExistingFile);
  replay->add_option("--report", replay_args.format, "Report format")->transform(CLI::CheckedTransformer(formats));

  SliceArgs slice_args;
  auto* slice = app.add_subcommand("slice", "Cut a time window and channel subset out of a recording");
  slice->add_option("log", slice_args.log, "Recording")->required()->check(CLI::ExistingFile);
  slice->add_option("--from", slice_args.from, "Window start, seconds")->required();
  slice->add_option("--to", slice_args.to, "Window end (exclusive), seconds")->required();
  slice->add_option("--channels", slice_args.channels, "Channel names")->delimiter(',');
  slice->add_option("--out,-o", slice_args.out, "Output file (default <log>.slice.dtpl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::ConfigError);
  }

  if (*run) return cmd_run(run_args, std::cout, std::cerr);
  if (*test) return cmd_test(test_args, std::cout, std::cerr);
  if (*replay) return cmd_replay(replay_args, std::cout, std::cerr);
  return cmd_slice(slice_args, std::cout, std::cerr);
}
