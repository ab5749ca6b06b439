#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string_view>
#include <vector>

namespace ipsw {

// Canonical covariate order. Cohort matrices, design matrices and report rows
// all index columns in this order; demographics come first so demographic-only
// column subsets are contiguous prefixes.
enum class Covariate : int {
  kAge = 0,
  kFemale,
  kRaceBlack,
  kRaceOther,
  kHispanic,
  kHypertension,
  kHeartFailure,
  kCad,
  kPad,
};

inline constexpr int kCovariateCount = 9;

constexpr int index_of(Covariate c) { return static_cast<int>(c); }

inline constexpr std::array<Covariate, kCovariateCount> kAllCovariates = {
    Covariate::kAge,          Covariate::kFemale,       Covariate::kRaceBlack,
    Covariate::kRaceOther,    Covariate::kHispanic,     Covariate::kHypertension,
    Covariate::kHeartFailure, Covariate::kCad,          Covariate::kPad,
};

constexpr bool is_binary(Covariate c) { return c != Covariate::kAge; }

constexpr bool is_clinical(Covariate c) { return index_of(c) >= index_of(Covariate::kHypertension); }

constexpr bool is_demographic(Covariate c) { return !is_clinical(c); }

std::string_view to_string(Covariate c);
std::optional<Covariate> covariate_from_string(std::string_view name);

// Value-semantic covariate subset; iteration always yields canonical order.
class CovariateSet {
 public:
  constexpr CovariateSet() = default;

  constexpr CovariateSet(std::initializer_list<Covariate> items) {
    for (Covariate c : items) insert(c);
  }

  static constexpr CovariateSet all() {
    CovariateSet s;
    s.bits_ = (1u << kCovariateCount) - 1;
    return s;
  }

  static constexpr CovariateSet demographic() {
    CovariateSet s;
    for (Covariate c : kAllCovariates)
      if (is_demographic(c)) s.insert(c);
    return s;
  }

  constexpr void insert(Covariate c) { bits_ |= mask(c); }
  constexpr void erase(Covariate c) { bits_ &= static_cast<std::uint16_t>(~mask(c)); }
  constexpr bool contains(Covariate c) const { return (bits_ & mask(c)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }

  constexpr int size() const {
    int n = 0;
    for (Covariate c : kAllCovariates) n += contains(c) ? 1 : 0;
    return n;
  }

  std::vector<Covariate> items() const {
    std::vector<Covariate> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (Covariate c : kAllCovariates)
      if (contains(c)) out.push_back(c);
    return out;
  }

  friend constexpr bool operator==(CovariateSet a, CovariateSet b) { return a.bits_ == b.bits_; }

 private:
  static constexpr std::uint16_t mask(Covariate c) {
    return static_cast<std::uint16_t>(1u << index_of(c));
  }

  std::uint16_t bits_ = 0;
};

}  // namespace ipsw
