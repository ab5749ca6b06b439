#include "ipsw/report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <system_error>

#include "ipsw/errors.hpp"
#include "ipsw/seeding.hpp"

namespace ipsw {

std::string format_double(double v) {
  std::array<char, 40> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (res.ec != std::errc())
    throw NumericalError("format_double: conversion failed");
  return std::string(buf.data(), res.ptr);
}

std::string fnv1a64_file_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path.string());
  std::uint64_t state = detail::kFnvOffset;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      state ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      state *= detail::kFnvPrime;
    }
  }
  if (in.bad()) throw IoError("cannot read file for hashing: " + path.string());
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[static_cast<std::size_t>(i)] = "0123456789abcdef"[state & 0xf];
    state >>= 4;
  }
  return hex;
}

void write_summary_csv(std::ostream& os, const MonteCarloResult& result) {
  os << "scenario,effect_scale,weighting_model,target,pate_mean,pate_sd,bias_mean,bias_sd,"
        "replications\n";
  for (const auto& row : result.summary) {
    os << row.scenario << ',' << format_double(row.effect_scale) << ',' << row.weighting_model
       << ',' << row.target << ',' << format_double(row.pate_mean) << ','
       << format_double(row.pate_sd) << ',' << format_double(row.bias_mean) << ','
       << format_double(row.bias_sd) << ',' << row.replications << '\n';
  }
}

void write_bias_draws_csv(std::ostream& os, const MonteCarloResult& result) {
  os << "scenario,effect_scale,weighting_model,target,rep,bias\n";
  for (std::size_t i = 0; i < result.summary.size(); ++i) {
    const auto& row = result.summary[i];
    const auto& draws = result.bias_draws[i];
    for (std::size_t r = 0; r < draws.size(); ++r) {
      os << row.scenario << ',' << format_double(row.effect_scale) << ',' << row.weighting_model
         << ',' << row.target << ',' << r << ',' << format_double(draws[r]) << '\n';
    }
  }
}

void write_balance_csv(std::ostream& os, const BalanceReport& report) {
  os << "row";
  for (const auto& p : report.populations) os << ',' << p;
  os << '\n';
  for (Covariate c : kAllCovariates) {
    os << to_string(c);
    for (std::size_t k = 0; k < report.populations.size(); ++k) {
      const auto& cell = report.cells[k][index_of(c)];
      os << ',';
      if (cell) os << format_double(*cell);  // unmeasured cells stay empty
    }
    os << '\n';
  }
  for (const auto& [label, values] : report.aggregates) {
    os << label;
    for (Eigen::Index k = 0; k < values.size(); ++k) os << ',' << format_double(values[k]);
    os << '\n';
  }
}

void write_love_plot_csv(std::ostream& os, const BalanceReport& report) {
  os << "population,covariate,signed_smd,abs_smd\n";
  for (const auto& row : love_plot_data(report)) {
    os << row.population << ',' << to_string(row.covariate) << ',';
    if (row.signed_smd) os << format_double(*row.signed_smd);
    os << ',';
    if (const auto a = row.abs_smd()) os << format_double(*a);
    os << '\n';
  }
}

void write_skip_log_csv(std::ostream& os, const std::vector<SkipRecord>& skips) {
  os << "weighting_model,target,reason\n";
  for (const auto& s : skips)
    os << s.weighting_model << ',' << s.target << ",\"" << s.reason << "\"\n";
}

void write_fit_diagnostics_csv(std::ostream& os, const MonteCarloResult& result) {
  os << "scenario,effect_scale,rep,weighting_model,target,converged,iterations,max_abs_score,"
        "ess,min_weight,max_weight,coefficients\n";
  for (const auto& row : result.fit_diagnostics) {
    const auto& f = row.fit;
    os << row.scenario << ',' << format_double(row.effect_scale) << ',' << row.rep_index << ','
       << f.weighting_model << ',' << f.target << ',' << (f.converged ? 1 : 0) << ','
       << f.iterations << ',' << format_double(f.max_abs_score) << ',' << format_double(f.ess)
       << ',' << format_double(f.min_weight) << ',' << format_double(f.max_weight) << ',';
    for (Eigen::Index j = 0; j < f.coefficients.size(); ++j) {
      if (j) os << ';';
      os << format_double(f.coefficients[j]);
    }
    os << '\n';
  }
}

namespace {

std::string_view display_name(Covariate c) {
  switch (c) {
    case Covariate::kAge: return "Age (years)";
    case Covariate::kFemale: return "Sex (female)";
    case Covariate::kRaceBlack: return "Race: Black";
    case Covariate::kRaceOther: return "Race: Other";
    case Covariate::kHispanic: return "Hispanic Ethnicity";
    case Covariate::kHypertension: return "Hypertension";
    case Covariate::kHeartFailure: return "Heart failure";
    case Covariate::kCad: return "Coronary artery disease";
    case Covariate::kPad: return "Peripheral artery disease";
  }
  return "unknown";
}

std::string fixed(double v, int digits) {
  std::array<char, 64> buf;
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  if (res.ec != std::errc()) throw NumericalError("fixed: conversion failed");
  return std::string(buf.data(), res.ptr);
}

}  // namespace

void write_population_table_csv(std::ostream& os, const std::vector<PopulationSpec>& specs,
                                const std::vector<Cohort>& cohorts) {
  if (specs.size() != cohorts.size())
    throw NumericalError("population table: specs and cohorts differ in length");
  os << "characteristic";
  for (const auto& s : specs) os << ',' << s.name;
  os << '\n';

  os << "N (simulated)";
  for (const auto& c : cohorts) os << ',' << c.size();
  os << '\n';

  for (Covariate cov : kAllCovariates) {
    os << '"' << display_name(cov) << '"';
    for (const auto& cohort : cohorts) {
      os << ',';
      if (!cohort.is_measured(cov)) {
        os << "—";  // em-dash marks unmeasured cells
        continue;
      }
      const auto col = cohort.column(cov);
      if (cov == Covariate::kAge) {
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() /
                                    static_cast<double>(col.size() - 1));
        os << '"' << fixed(mean, 1) << " (" << fixed(sd, 1) << ")\"";
      } else {
        const auto count = static_cast<long long>(col.sum());
        const double pct = 100.0 * col.mean();
        os << '"' << count << " (" << fixed(pct, 1) << "%)\"";
      }
    }
    os << '\n';
  }
}

}  // namespace ipsw
