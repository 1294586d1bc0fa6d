#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vst/model.hpp"
#include "vst/train/trainer.hpp"

namespace vst::app {

struct DataSource {
  std::string manifest;
  double weight = 1.0;

  bool operator==(const DataSource&) const = default;
};

// Everything `train` needs. Relative paths inside a config file resolve
// against the file's directory; paths given on the command line against the
// working directory.
struct RunConfig {
  ModelConfig model = ModelConfig::toy_preset();
  train::TrainConfig train;
  std::vector<DataSource> train_sources;
  std::string eval_manifest;  // empty: the first training source
  std::string output_dir = "run";

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const train::TrainConfig& config);

// Applies `doc` over `base`; unknown keys throw ConfigError.
RunConfig apply_json(RunConfig base, const nlohmann::json& doc);
train::TrainConfig apply_json(train::TrainConfig base, const nlohmann::json& doc, const std::string& where);

// Sets a dotted key ("train.seed=3") inside `doc`. The value is parsed as
// JSON when possible, otherwise taken as a string.
void apply_assignment(nlohmann::json& doc, const std::string& assignment);

// Reads a JSON config file (ConfigError naming the path if missing or
// malformed) with its relative paths made absolute.
nlohmann::json read_config_document(const std::filesystem::path& file);

// File, then assignments in order; the result is validated.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& assignments);

}  // namespace vst::app
