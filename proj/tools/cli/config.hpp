#pragma once

// Experiment configuration files (JSON). Every key is checked; unknown keys
// and ill-typed values raise ConfigError naming the offending field.

#include <string>

#include "json.hpp"

#include "imcsim/train.hpp"

namespace imcsim::cli {

struct ExperimentConfig {
  train::TrainConfig train;
  std::string output_dir = "run";
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

/// Fully resolved document; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

ModelSpec parse_model(const nlohmann::json& node);
nlohmann::json model_to_json(const ModelSpec& model);

}  // namespace imcsim::cli
