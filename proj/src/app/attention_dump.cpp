#include "vst/app/attention_dump.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "vst/errors.hpp"

namespace vst::app {

std::string char_token(char c) { return c == '?' ? std::string("unk") : std::string(1, c); }

template <typename T>
std::vector<AttentionMap> attention_maps(const ForwardTrace<T>& trace, const ModelConfig& config,
                                         const std::string& decoded, int b) {
  const int t = config.max_len, n = config.sequence_length();
  const int len = std::min(static_cast<int>(decoded.size()), t);
  const GridShape grid{config.feature_height(), config.feature_width()};
  const GridShape image{config.image_height, config.image_width};
  if (b < 0 || b >= trace.attn_primary.dim(0)) throw IndexError("attention_maps: batch index out of range");

  auto batch_rows = [&](const ad::Tensor<T>& attn) {
    return attn.data().subspan(static_cast<std::size_t>(b) * t * n, static_cast<std::size_t>(t) * n);
  };
  std::vector<std::pair<std::string, std::vector<Heatmap>>> sites;
  sites.emplace_back("primary", attention_heatmaps<T>(batch_rows(trace.attn_primary), t, grid, image));
  sites.emplace_back("secondary", attention_heatmaps<T>(batch_rows(trace.attn_secondary), t, grid, image));

  if (!trace.interaction_attention.empty()) {
    // Last layer, semantic rows (first t) against visual columns (last n).
    const auto& a = trace.interaction_attention.back();
    const auto heads = a.dim(1), joined = a.dim(2);
    std::vector<double> avg(static_cast<std::size_t>(t) * n, 0.0);
    const auto data = a.data();
    for (std::int64_t h = 0; h < heads; ++h)
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < n; ++j) {
          const auto idx = ((b * heads + h) * joined + i) * joined + t + j;
          avg[static_cast<std::size_t>(i) * n + j] += static_cast<double>(data[static_cast<std::size_t>(idx)]);
        }
    for (auto& v : avg) v /= static_cast<double>(heads);
    sites.emplace_back("interaction", attention_heatmaps<double>(avg, t, grid, image));
  }

  std::vector<AttentionMap> out;
  for (auto& [site, maps] : sites) {
    for (int i = 0; i < len; ++i) {
      const char c = decoded[static_cast<std::size_t>(i)];
      out.push_back({site, i, c, std::move(maps[static_cast<std::size_t>(i)]),
                     site + "_" + std::to_string(i) + "_" + char_token(c) + ".pnm"});
    }
  }
  return out;
}

data::Image overlay(const data::PreprocessedImage& image, const Heatmap& heatmap) {
  if (heatmap.height != image.height || heatmap.width != image.width)
    throw DimensionError("overlay: heatmap and image sizes differ");
  data::Image out(image.height, image.width, 1);
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t p = 0; p < plane; ++p) {
    const double gray = (image.chw[p] + image.chw[plane + p] + image.chw[2 * plane + p]) / 3.0;
    const double g255 = (gray + 1.0) * 127.5;
    const double v = 0.5 * g255 + 0.5 * 255.0 * heatmap.values[p];
    out.pixels[p] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return out;
}

void write_attention_maps(const std::filesystem::path& dir, const std::vector<AttentionMap>& maps,
                          const data::PreprocessedImage& image) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  nlohmann::json index = nlohmann::json::array();
  for (const auto& m : maps) {
    data::write_pnm(dir / m.file, overlay(image, m.heatmap));
    const auto [lo, hi] = std::minmax_element(m.heatmap.values.begin(), m.heatmap.values.end());
    index.push_back({{"file", m.file},
                     {"site", m.site},
                     {"char_index", m.char_index},
                     {"char", std::string(1, m.character)},
                     {"min", *lo},
                     {"max", *hi}});
  }
  data::write_file(dir / "attention.json", index.dump(2) + "\n");
}

template std::vector<AttentionMap> attention_maps<float>(const ForwardTrace<float>&, const ModelConfig&,
                                                         const std::string&, int);
template std::vector<AttentionMap> attention_maps<double>(const ForwardTrace<double>&, const ModelConfig&,
                                                          const std::string&, int);

}  // namespace vst::app
