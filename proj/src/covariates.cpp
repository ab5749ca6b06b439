#include "ipsw/covariates.hpp"

namespace ipsw {

std::string_view to_string(Covariate c) {
  switch (c) {
    case Covariate::kAge: return "age";
    case Covariate::kFemale: return "female";
    case Covariate::kRaceBlack: return "race_black";
    case Covariate::kRaceOther: return "race_other";
    case Covariate::kHispanic: return "hispanic";
    case Covariate::kHypertension: return "hypertension";
    case Covariate::kHeartFailure: return "heart_failure";
    case Covariate::kCad: return "cad";
    case Covariate::kPad: return "pad";
  }
  return "unknown";
}

std::optional<Covariate> covariate_from_string(std::string_view name) {
  for (Covariate c : kAllCovariates)
    if (to_string(c) == name) return c;
  return std::nullopt;
}

}  // namespace ipsw
