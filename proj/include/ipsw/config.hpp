#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "ipsw/estimation.hpp"

namespace ipsw {

// Parses a JSON study config. An empty or whitespace-only file yields the
// built-in defaults. Unknown keys, malformed values and structural problems
// raise ConfigError naming the offending path. The result is validated.
StudyConfig parse_config(const std::filesystem::path& path);
StudyConfig config_from_json(const nlohmann::json& j);

// Serializes the fully resolved config (defaults materialized) so a run can
// be reproduced from its manifest alone.
nlohmann::json config_to_json(const StudyConfig& config);

}  // namespace ipsw
