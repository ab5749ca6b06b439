#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ipsw/errors.hpp"
#include "ipsw/study.hpp"
#include "ipsw/version.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

void add_common_options(CLI::App* cmd, ipsw::RunOptions& options, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON study config (defaults used when omitted)");
  cmd->add_option("--out", options.out_dir, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic target-population weighting study"};
  app.set_version_flag("--version", std::string(ipsw::kVersion));
  app.require_subcommand(1);

  ipsw::RunOptions options;
  std::string config_path;
  int replications = 0;
  std::uint64_t seed = 0;
  int workers = 0;
  std::vector<std::string> scenarios;
  std::vector<double> scales;
  bool diagnostics = false;
  bool quiet = false;

  CLI::App* run = app.add_subcommand("run", "Run the simulation study and write all outputs");
  add_common_options(run, options, config_path);
  run->add_option("--replications", replications, "Override replication count")
      ->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Override master seed");
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--scenario", scenarios, "Restrict to named scenarios (repeatable)");
  run->add_option("--scale", scales, "Restrict to these effect scales (repeatable)");
  run->add_flag("--fit-diagnostics", diagnostics, "Record per-fit solver diagnostics");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  CLI::App* balance =
      app.add_subcommand("balance", "Write parameter-level balance outputs only");
  add_common_options(balance, options, config_path);

  CLI::App* show = app.add_subcommand("config", "Print the resolved config as JSON");
  show->add_option("--config", config_path, "JSON study config (defaults used when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (!config_path.empty()) options.config_path = config_path;
  if (replications > 0) options.replications = replications;
  if (!seed_opt->empty()) options.master_seed = seed;
  if (workers > 0) options.workers = workers;
  options.scenario_filter = scenarios;
  options.scale_filter = scales;
  options.fit_diagnostics = diagnostics;
  options.quiet = quiet;

  try {
    if (run->parsed()) {
      ipsw::run_study(options);
    } else if (balance->parsed()) {
      ipsw::run_balance_only(options);
    } else if (show->parsed()) {
      std::cout << ipsw::resolved_config_json(options.config_path) << '\n';
    }
    return 0;
  } catch (const ipsw::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ipsw::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ipsw::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
