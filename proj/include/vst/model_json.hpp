#pragma once

#include "json.hpp"
#include "vst/model.hpp"

namespace vst {

nlohmann::json to_json(const ModelConfig& config);

// Applies the keys present in `patch` on top of `base`. Unknown keys and
// ill-typed values throw ConfigError naming the key path.
ModelConfig apply_json(ModelConfig base, const nlohmann::json& patch, const std::string& where = "model");

// Reads a typed value, rethrowing JSON type errors as ConfigError.
template <typename V>
V json_value(const nlohmann::json& j, const std::string& key_path) {
  try {
    return j.get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("'" + key_path + "' has the wrong type: " + j.dump());
  }
}

}  // namespace vst
