#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vst/model.hpp"
#include "vst/train/optimizer.hpp"

namespace vst::train {

inline constexpr const char* kCheckpointMagic = "VSTCKPT v1";

// Layout: the magic line, a JSON config block, one record per storage
// (name, dtype, slot, shape, byte length, little-endian values), alias
// records, then optional Adam moments. Written atomically via rename.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const VstModel<T>& model, const Adam<T>* optimizer = nullptr,
                     const nlohmann::json& metadata = nlohmann::json::object());

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<VstModel<T>> model;
  nlohmann::json metadata;
  bool has_optimizer = false;
  std::int64_t optimizer_steps = 0;
  AdamConfig optimizer_config;
  std::vector<std::vector<T>> first_moments;
  std::vector<std::vector<T>> second_moments;

  // Copies the saved moments into a freshly constructed optimizer.
  void restore(Adam<T>& optimizer) const;
};

// Parses the whole file before building anything: any error (bad magic,
// version, truncation, name or shape mismatch) throws FormatError and no
// model is returned. A missing file throws IoError.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

// Only the config block; cheap for commands that just need the architecture.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace vst::train
