#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

#include "json.hpp"

#include "vst/data/image.hpp"
#include "vst/data/manifest.hpp"

namespace vst::data {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

// Row-major 5x7 bitmap; bit 4 of each row is the leftmost pixel.
using GlyphBitmap = std::array<std::uint8_t, kGlyphHeight>;

// Built-in font for [0-9a-z] (case-folded). Throws ConfigError otherwise.
const GlyphBitmap& glyph_bitmap(char c);

struct GlyphDatasetSpec {
  std::uint64_t seed = 1;
  int num_samples = 200;
  std::string charset = "0123456789ab";
  int min_len = 1;
  int max_len = 6;
  int canvas_height = 32;
  int glyph_scale = 2;          // font pixel -> scale x scale block
  double noise_std = 8.0;       // additive Gaussian, in 0..255 units
  int spacing_jitter = 2;       // extra inter-glyph gap, uniform 0..n pixels
  double scale_jitter = 0.1;    // horizontal glyph width factor 1 +- this
  int vertical_jitter = 2;      // baseline offset, uniform -n..n pixels
  std::uint8_t background = 235;
  std::uint8_t ink = 25;

  void validate() const;
  bool operator==(const GlyphDatasetSpec&) const = default;
};

void to_json(nlohmann::json& j, const GlyphDatasetSpec& spec);
void from_json(const nlohmann::json& j, GlyphDatasetSpec& spec);

// Single-channel rendering of `text` with jitter and noise drawn from rng.
Image render_text(std::string_view text, const GlyphDatasetSpec& spec, std::mt19937_64& rng);

// Writes images/NNNNN.pnm, manifest.tsv and spec.json under out_dir.
// Output bytes depend only on the spec.
SampleManifest generate_glyph_dataset(const GlyphDatasetSpec& spec, const std::filesystem::path& out_dir);

inline constexpr const char* kManifestFileName = "manifest.tsv";
inline constexpr const char* kSpecFileName = "spec.json";

}  // namespace vst::data
