#pragma once

// JSON forms of the configuration structs. Parsing is strict: unknown keys
// are rejected, missing keys keep their defaults.

#include <json.hpp>

#include <string>

#include "coffee/sequence_model.hpp"
#include "coffee/synthetic_world.hpp"

namespace coffee {

struct TrainConfig;

nlohmann::json config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Hex FNV-1a of the canonical (sorted-key) serialization.
std::string digest(const nlohmann::json& j);
std::string run_digest(const ModelConfig& model, const TrainConfig& train);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace coffee
