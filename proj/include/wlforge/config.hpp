#pragma once

#include "wlforge/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace wlforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every parser rejects unknown keys; missing keys keep their defaults.

nlohmann::json to_json(const PromptSpec& spec);
PromptSpec prompt_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BackendConfig& backend);
BackendConfig backend_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

nlohmann::json to_json(const PixelClassifier& model);
PixelClassifier classifier_from_json(const nlohmann::json& j);
void save_classifier(const PixelClassifier& model, const std::filesystem::path& path);
PixelClassifier load_classifier(const std::filesystem::path& path);

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunRecord& record);

/// 16 hex digits of FNV-1a over the canonical JSON of the config, excluding out_dir.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace wlforge
