#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ipsw/estimation.hpp"

namespace ipsw {

struct RunOptions {
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir;
  std::optional<int> replications;
  std::optional<std::uint64_t> master_seed;
  std::optional<int> workers;
  std::vector<std::string> scenario_filter;  // empty: all configured scenarios
  std::vector<double> scale_filter;          // empty: configured effect_scales
  bool fit_diagnostics = false;
  bool quiet = true;
};

// Loads the config, applies overrides, runs the full study and writes every
// output plus manifest.json into out_dir. On failure partially written outputs
// are removed. Worker resolution: option > config > IPSW_SIM_WORKERS > 1.
void run_study(const RunOptions& options);

// Parameter-level outputs only (balance table, love plot, population table);
// no simulation.
void run_balance_only(const RunOptions& options);

// Resolved config as pretty JSON (for `ipsw_sim config`).
std::string resolved_config_json(const std::optional<std::filesystem::path>& config_path);

}  // namespace ipsw
