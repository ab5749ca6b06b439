#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ipsw/balance.hpp"
#include "ipsw/estimation.hpp"

namespace ipsw {

// Shortest round-trip decimal representation (std::to_chars).
std::string format_double(double v);

// Streaming FNV-1a 64 over a file's bytes, hex-encoded. Throws IoError.
std::string fnv1a64_file_hex(const std::filesystem::path& path);

void write_summary_csv(std::ostream& os, const MonteCarloResult& result);
void write_bias_draws_csv(std::ostream& os, const MonteCarloResult& result);
void write_balance_csv(std::ostream& os, const BalanceReport& report);
void write_love_plot_csv(std::ostream& os, const BalanceReport& report);
void write_skip_log_csv(std::ostream& os, const std::vector<SkipRecord>& skips);
void write_fit_diagnostics_csv(std::ostream& os, const MonteCarloResult& result);

// Table-1 style rendering from realized cohorts: counts with percents,
// age as "mean (sd)", unmeasured cells as an em-dash.
void write_population_table_csv(std::ostream& os, const std::vector<PopulationSpec>& specs,
                                const std::vector<Cohort>& cohorts);

}  // namespace ipsw
