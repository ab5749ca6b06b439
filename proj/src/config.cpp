#include "ipsw/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipsw/errors.hpp"

namespace ipsw {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void reject_unknown_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&key](const char* k) { return key == k; }) == allowed.end())
      fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get_number(const json& j, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) fail(path, "expected a boolean");
  } else {
    if (!j.is_number()) fail(path, "expected a number");
  }
  return j.get<T>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

Covariate get_covariate(const json& j, const std::string& path) {
  const std::string name = get_string(j, path);
  const auto c = covariate_from_string(name);
  if (!c) fail(path, "unknown covariate '" + name + "'");
  return *c;
}

PopulationSpec parse_population(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown_keys(j, path,
                      {"name", "role", "n_simulated", "age_mean", "age_sd", "prevalence"});
  for (const char* key : {"name", "role", "n_simulated", "age_mean", "age_sd", "prevalence"})
    if (!j.contains(key)) fail(path, std::string("missing key '") + key + "'");

  PopulationSpec spec;
  spec.name = get_string(j.at("name"), path + ".name");
  const std::string role = get_string(j.at("role"), path + ".role");
  const auto parsed_role = role_from_string(role);
  if (!parsed_role) fail(path + ".role", "unknown role '" + role + "'");
  spec.role = *parsed_role;
  spec.n_simulated = get_number<Eigen::Index>(j.at("n_simulated"), path + ".n_simulated");
  spec.age_mean = get_number<double>(j.at("age_mean"), path + ".age_mean");
  spec.age_sd = get_number<double>(j.at("age_sd"), path + ".age_sd");

  const json& prev = j.at("prevalence");
  expect_object(prev, path + ".prevalence");
  reject_unknown_keys(prev, path + ".prevalence",
                      {"female", "race_black", "race_other", "hispanic", "hypertension",
                       "heart_failure", "cad", "pad"});
  for (Covariate c : kAllCovariates) {
    if (c == Covariate::kAge) continue;
    const std::string key(to_string(c));
    const std::string key_path = path + ".prevalence." + key;
    if (!prev.contains(key)) fail(path + ".prevalence", "missing key '" + key + "'");
    const json& v = prev.at(key);
    if (v.is_null()) continue;  // explicit null marks the covariate unmeasured
    spec.prevalence[index_of(c)] = get_number<double>(v, key_path);
  }
  return spec;
}

ScenarioSpec parse_scenario(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown_keys(j, path, {"name", "modifiers", "mu0", "treatment_shift", "beta", "delta",
                                "sigma_eps", "effect_scale"});
  if (!j.contains("name")) fail(path, "missing key 'name'");
  if (!j.contains("modifiers")) fail(path, "missing key 'modifiers'");

  ScenarioSpec spec;
  spec.name = get_string(j.at("name"), path + ".name");
  const json& mods = j.at("modifiers");
  if (!mods.is_array()) fail(path + ".modifiers", "expected an array of covariate names");
  for (std::size_t i = 0; i < mods.size(); ++i)
    spec.modifiers.insert(
        get_covariate(mods.at(i), path + ".modifiers[" + std::to_string(i) + "]"));

  auto number = [&](const char* key, double fallback) {
    return j.contains(key) ? get_number<double>(j.at(key), path + "." + key) : fallback;
  };
  spec.mu0 = number("mu0", spec.mu0);
  spec.treatment_shift = number("treatment_shift", spec.treatment_shift);
  spec.beta = number("beta", spec.beta);
  spec.delta = number("delta", spec.delta);
  spec.sigma_eps = number("sigma_eps", spec.sigma_eps);
  spec.effect_scale = number("effect_scale", spec.effect_scale);
  return spec;
}

WeightingSpec parse_weighting(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown_keys(j, path, {"name", "covariates"});
  if (!j.contains("name")) fail(path, "missing key 'name'");
  if (!j.contains("covariates")) fail(path, "missing key 'covariates'");

  WeightingSpec spec;
  spec.name = get_string(j.at("name"), path + ".name");
  const json& cov = j.at("covariates");
  if (!cov.is_array()) fail(path + ".covariates", "expected an array of covariate names");
  for (std::size_t i = 0; i < cov.size(); ++i)
    spec.covariates.insert(
        get_covariate(cov.at(i), path + ".covariates[" + std::to_string(i) + "]"));
  return spec;
}

}  // namespace

StudyConfig config_from_json(const nlohmann::json& j) {
  expect_object(j, "(root)");
  reject_unknown_keys(j, "",
                      {"replications", "master_seed", "effect_scales", "workers", "age_anchor",
                       "max_weight", "reference_weighting", "fit_diagnostics", "populations",
                       "scenarios", "weighting_models"});

  StudyConfig config = default_config();
  if (j.contains("replications"))
    config.replications = get_number<int>(j.at("replications"), "replications");
  if (j.contains("master_seed"))
    config.master_seed = get_number<std::uint64_t>(j.at("master_seed"), "master_seed");
  if (j.contains("effect_scales")) {
    const json& scales = j.at("effect_scales");
    if (!scales.is_array()) fail("effect_scales", "expected an array of numbers");
    config.effect_scales.clear();
    for (std::size_t i = 0; i < scales.size(); ++i)
      config.effect_scales.push_back(
          get_number<double>(scales.at(i), "effect_scales[" + std::to_string(i) + "]"));
  }
  if (j.contains("workers")) config.workers = get_number<int>(j.at("workers"), "workers");
  if (j.contains("age_anchor"))
    config.age_anchor = get_string(j.at("age_anchor"), "age_anchor");
  if (j.contains("max_weight"))
    config.max_weight = get_number<double>(j.at("max_weight"), "max_weight");
  if (j.contains("reference_weighting"))
    config.reference_weighting = get_string(j.at("reference_weighting"), "reference_weighting");
  if (j.contains("fit_diagnostics"))
    config.collect_fit_diagnostics = get_number<bool>(j.at("fit_diagnostics"), "fit_diagnostics");

  if (j.contains("populations")) {
    const json& pops = j.at("populations");
    if (!pops.is_array()) fail("populations", "expected an array");
    config.populations.clear();
    for (std::size_t i = 0; i < pops.size(); ++i)
      config.populations.push_back(
          parse_population(pops.at(i), "populations[" + std::to_string(i) + "]"));
  }
  if (j.contains("scenarios")) {
    const json& scen = j.at("scenarios");
    if (!scen.is_array()) fail("scenarios", "expected an array");
    config.scenarios.clear();
    for (std::size_t i = 0; i < scen.size(); ++i)
      config.scenarios.push_back(
          parse_scenario(scen.at(i), "scenarios[" + std::to_string(i) + "]"));
  }
  if (j.contains("weighting_models")) {
    const json& models = j.at("weighting_models");
    if (!models.is_array()) fail("weighting_models", "expected an array");
    config.weighting_models.clear();
    for (std::size_t i = 0; i < models.size(); ++i)
      config.weighting_models.push_back(
          parse_weighting(models.at(i), "weighting_models[" + std::to_string(i) + "]"));
  }

  config.validate();
  return config;
}

StudyConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read config file: " + path.string());
  const std::string text = buffer.str();

  if (std::all_of(text.begin(), text.end(),
                  [](unsigned char c) { return std::isspace(c) != 0; })) {
    StudyConfig config = default_config();
    config.validate();
    return config;
  }

  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const StudyConfig& config) {
  json j;
  j["replications"] = config.replications;
  j["master_seed"] = config.master_seed;
  j["effect_scales"] = config.effect_scales;
  if (config.workers) j["workers"] = *config.workers;
  j["age_anchor"] = config.age_anchor ? *config.age_anchor : config.analytic_sample().name;
  if (config.max_weight) j["max_weight"] = *config.max_weight;
  j["reference_weighting"] = config.resolved_reference_weighting();
  j["fit_diagnostics"] = config.collect_fit_diagnostics;

  j["populations"] = json::array();
  for (const auto& p : config.populations) {
    json jp;
    jp["name"] = p.name;
    jp["role"] = std::string(to_string(p.role));
    jp["n_simulated"] = p.n_simulated;
    jp["age_mean"] = p.age_mean;
    jp["age_sd"] = p.age_sd;
    json prev;
    for (Covariate c : kAllCovariates) {
      if (c == Covariate::kAge) continue;
      const auto v = p.prevalence_of(c);
      prev[std::string(to_string(c))] = v ? json(*v) : json(nullptr);
    }
    jp["prevalence"] = std::move(prev);
    j["populations"].push_back(std::move(jp));
  }

  j["scenarios"] = json::array();
  for (const auto& s : config.scenarios) {
    json js;
    js["name"] = s.name;
    js["modifiers"] = json::array();
    for (Covariate c : s.modifiers.items()) js["modifiers"].push_back(std::string(to_string(c)));
    js["mu0"] = s.mu0;
    js["treatment_shift"] = s.treatment_shift;
    js["beta"] = s.beta;
    js["delta"] = s.delta;
    js["sigma_eps"] = s.sigma_eps;
    js["effect_scale"] = s.effect_scale;
    j["scenarios"].push_back(std::move(js));
  }

  j["weighting_models"] = json::array();
  for (const auto& w : config.weighting_models) {
    json jw;
    jw["name"] = w.name;
    jw["covariates"] = json::array();
    for (Covariate c : w.covariates.items()) jw["covariates"].push_back(std::string(to_string(c)));
    j["weighting_models"].push_back(std::move(jw));
  }
  return j;
}

}  // namespace ipsw
