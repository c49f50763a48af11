#pragma once

#include "mah/trainer.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace mah {

// Where a resolved config value came from.
enum class ValueSource { config, default_value, flag };

struct ResolvedConfig {
    TrainConfig config;
    // Keyed by JSON pointer, e.g. "/weights/gamma".
    std::map<std::string, ValueSource> sources;
};

nlohmann::json config_to_json(const TrainConfig& config);

// Reads a TrainConfig from its JSON form. Missing fields take defaults and
// are marked as such; unknown fields and wrong types throw ValidationError
// naming the field. `overrides` (same layout) win over `doc`.
ResolvedConfig resolve_config(const nlohmann::json& doc, const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json sources_to_json(const ResolvedConfig& resolved);

}  // namespace mah
