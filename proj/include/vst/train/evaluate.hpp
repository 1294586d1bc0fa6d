#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vst/data/dataset.hpp"
#include "vst/data/manifest.hpp"
#include "vst/model.hpp"

namespace vst::train {

std::size_t edit_distance(std::string_view a, std::string_view b);

// Both strings are normalized first. 1 - edit / max(len); 1 when both empty.
double char_accuracy(std::string_view prediction, std::string_view label);
bool sequence_match(std::string_view prediction, std::string_view label);

struct ModeAccuracy {
  DecodeMode mode = DecodeMode::kS2;
  double sequence_accuracy = 0.0;
  double char_accuracy = 0.0;
};

struct EvalReport {
  DecodeMode mode = DecodeMode::kVote;
  std::size_t total = 0;      // manifest records
  std::size_t evaluated = 0;  // images decoded
  double sequence_accuracy = 0.0;  // for `mode`
  double char_accuracy = 0.0;
  std::vector<ModeAccuracy> branches;  // s2, s3, vote[, full]
  std::vector<std::string> missing;    // unreadable images, skipped

  const ModeAccuracy& branch(DecodeMode m) const;
};

nlohmann::json to_json(const EvalReport& report);
std::string format_table(const EvalReport& report);

// Decodes every sample once per forward pass and scores all modes the
// model supports. Throws ConfigError on an empty dataset and ContractError
// when `mode` is full on a basic model. Parameters are left untouched.
template <typename T>
EvalReport evaluate(const VstModel<T>& model, const data::LoadedDataset& dataset, DecodeMode mode,
                    int batch_size = 32);

template <typename T>
EvalReport evaluate(const VstModel<T>& model, const data::SampleManifest& manifest, DecodeMode mode,
                    int batch_size = 32);

}  // namespace vst::train
