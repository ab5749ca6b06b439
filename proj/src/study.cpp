#include "ipsw/study.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "ipsw/balance.hpp"
#include "ipsw/config.hpp"
#include "ipsw/errors.hpp"
#include "ipsw/report.hpp"
#include "ipsw/seeding.hpp"
#include "ipsw/version.hpp"

namespace ipsw {

namespace {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int resolve_workers(const RunOptions& options, const StudyConfig& config) {
  if (options.workers) {
    if (*options.workers < 1) throw ConfigError("workers must be >= 1");
    return *options.workers;
  }
  if (config.workers) return *config.workers;
  if (const char* env = std::getenv("IPSW_SIM_WORKERS")) {
    int value = 0;
    const auto res = std::from_chars(env, env + std::string_view(env).size(), value);
    if (res.ec != std::errc() || *res.ptr != '\0' || value < 1)
      throw ConfigError("IPSW_SIM_WORKERS must be a positive integer, got '" + std::string(env) +
                        "'");
    return value;
  }
  return 1;
}

StudyConfig load_config(const RunOptions& options) {
  StudyConfig config =
      options.config_path ? parse_config(*options.config_path) : default_config();

  if (options.replications) config.replications = *options.replications;
  if (options.master_seed) config.master_seed = *options.master_seed;
  if (options.fit_diagnostics) config.collect_fit_diagnostics = true;

  if (!options.scenario_filter.empty()) {
    std::vector<ScenarioSpec> kept;
    for (const auto& name : options.scenario_filter) {
      const auto it = std::find_if(config.scenarios.begin(), config.scenarios.end(),
                                   [&name](const ScenarioSpec& s) { return s.name == name; });
      if (it == config.scenarios.end())
        throw ConfigError("unknown scenario '" + name + "'");
      kept.push_back(*it);
    }
    config.scenarios = std::move(kept);
  }
  if (!options.scale_filter.empty()) config.effect_scales = options.scale_filter;

  config.workers = resolve_workers(options, config);
  config.validate();
  return config;
}

// Writes files through a collector so a failed run leaves no partial output.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  template <typename Fn>
  void write(const std::string& name, Fn&& fn) {
    const auto path = dir_ / name;
    {
      std::ofstream os(path, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot open output file: " + path.string());
      fn(os);
      os.flush();
      if (!os.good()) throw IoError("failed writing output file: " + path.string());
    }
    written_.push_back(name);
  }

  json inventory() const {
    json files = json::array();
    for (const auto& name : written_) {
      const auto path = dir_ / name;
      json entry;
      entry["file"] = name;
      entry["bytes"] = static_cast<std::uint64_t>(std::filesystem::file_size(path));
      entry["fnv1a64"] = fnv1a64_file_hex(path);
      files.push_back(std::move(entry));
    }
    return files;
  }

  void remove_all() noexcept {
    for (const auto& name : written_) {
      std::error_code ec;
      std::filesystem::remove(dir_ / name, ec);
    }
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> written_;
};

BalanceReport build_balance_report(const StudyConfig& config) {
  const auto& reference = config.reference();
  std::vector<PopulationSpec> comparators;
  for (const auto& p : config.populations)
    if (p.role != PopulationRole::kReference) comparators.push_back(p);
  BalanceReport report = parameter_balance(comparators, reference);
  // one aggregate row per scenario x weighting model: the scenario's modifier
  // set restricted to the covariates that model balances
  for (const auto& s : config.scenarios) {
    for (const auto& w : config.weighting_models) {
      CovariateSet joint;
      for (Covariate c : s.modifiers.items())
        if (w.covariates.contains(c)) joint.insert(c);
      add_aggregate_row(report, "aggregate:" + s.name + ":" + w.name, joint);
    }
  }
  return report;
}

void write_parameter_outputs(OutputSet& out, const StudyConfig& config) {
  const BalanceReport report = build_balance_report(config);
  out.write("balance_table.csv", [&report](std::ostream& os) { write_balance_csv(os, report); });
  out.write("love_plot_data.csv",
            [&report](std::ostream& os) { write_love_plot_csv(os, report); });

  const std::uint64_t table_seed = child_seed(config.master_seed, "population_table", 1.0, 0);
  std::vector<Cohort> cohorts;
  cohorts.reserve(config.populations.size());
  for (const auto& spec : config.populations)
    cohorts.push_back(sample_population(spec, population_seed(table_seed, spec.name)));
  out.write("population_table.csv", [&](std::ostream& os) {
    write_population_table_csv(os, config.populations, cohorts);
  });
}

void write_manifest(OutputSet& out, const StudyConfig& config, const std::string& started,
                    const std::vector<std::string>& warnings) {
  json manifest;
  manifest["tool"] = "ipsw_sim";
  manifest["version"] = std::string(kVersion);
  manifest["started_utc"] = started;
  manifest["finished_utc"] = utc_timestamp();
  manifest["master_seed"] = config.master_seed;
  manifest["workers"] = config.workers.value_or(1);
  manifest["replications"] = config.replications;
  manifest["warnings"] = warnings;
  manifest["config"] = config_to_json(config);
  manifest["outputs"] = out.inventory();
  out.write("manifest.json", [&manifest](std::ostream& os) { os << manifest.dump(2) << '\n'; });
}

}  // namespace

void run_study(const RunOptions& options) {
  const std::string started = utc_timestamp();
  const StudyConfig config = load_config(options);

  OutputSet out(options.out_dir);
  try {
    ProgressFn progress;
    if (!options.quiet) {
      progress = [](const std::string& cell, int done, int total) {
        const int step = std::max(1, total / 20);
        if (done % step == 0 || done == total)
          std::cerr << cell << ": " << done << "/" << total << " replications\n";
      };
    }

    const MonteCarloResult result = run_monte_carlo(config, progress);

    out.write("summary_table.csv",
              [&result](std::ostream& os) { write_summary_csv(os, result); });
    out.write("bias_draws.csv",
              [&result](std::ostream& os) { write_bias_draws_csv(os, result); });
    out.write("skip_log.csv",
              [&result](std::ostream& os) { write_skip_log_csv(os, result.plan.skips); });
    if (config.collect_fit_diagnostics)
      out.write("fit_diagnostics.csv",
                [&result](std::ostream& os) { write_fit_diagnostics_csv(os, result); });
    write_parameter_outputs(out, config);
    write_manifest(out, config, started, result.warnings);
  } catch (...) {
    out.remove_all();
    throw;
  }
}

void run_balance_only(const RunOptions& options) {
  const std::string started = utc_timestamp();
  const StudyConfig config = load_config(options);
  OutputSet out(options.out_dir);
  try {
    write_parameter_outputs(out, config);
    write_manifest(out, config, started, {});
  } catch (...) {
    out.remove_all();
    throw;
  }
}

std::string resolved_config_json(const std::optional<std::filesystem::path>& config_path) {
  const StudyConfig config = config_path ? parse_config(*config_path) : default_config();
  config.validate();
  return config_to_json(config).dump(2);
}

}  // namespace ipsw
