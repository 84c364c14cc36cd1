#pragma once

// JSON mapping of the model and training configurations. Missing keys keep
// their defaults; unknown keys raise ConfigError.

#include "implisat/model.hpp"
#include "implisat/trainer.hpp"
#include "json.hpp"

namespace implisat {

nlohmann::json to_json_value(const ModelConfig& config);
nlohmann::json to_json_value(const TrainConfig& config);

/// Overlays the keys present in `j` onto `config`.
void apply_json(const nlohmann::json& j, ModelConfig& config);
void apply_json(const nlohmann::json& j, TrainConfig& config);

}  // namespace implisat
