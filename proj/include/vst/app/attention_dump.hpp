#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vst/align.hpp"
#include "vst/data/image.hpp"
#include "vst/model.hpp"

namespace vst::app {

struct AttentionMap {
  std::string site;  // "primary", "secondary" or "interaction"
  int char_index = 0;
  char character = '?';
  Heatmap heatmap;   // image-sized, values in [0, 1]
  std::string file;  // {site}_{charIndex}_{char}.pnm
};

// Per decoded character: rows of both alignment call sites and the
// head-averaged semantic-to-visual block of the last interaction layer.
// Uses batch element `b` of the trace.
template <typename T>
std::vector<AttentionMap> attention_maps(const ForwardTrace<T>& trace, const ModelConfig& config,
                                         const std::string& decoded, int b = 0);

// 50% grayscale image + 50% heatmap intensity, as an 8-bit PGM.
data::Image overlay(const data::PreprocessedImage& image, const Heatmap& heatmap);

// Writes one overlay per map plus attention.json (file, site, index, range).
void write_attention_maps(const std::filesystem::path& dir, const std::vector<AttentionMap>& maps,
                          const data::PreprocessedImage& image);

// Filename-safe form of a decoded character ('?' becomes "unk").
std::string char_token(char c);

}  // namespace vst::app
