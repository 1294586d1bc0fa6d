#include "vst/align.hpp"

#include <algorithm>

#include "vst/autodiff/ops.hpp"
#include "vst/resample.hpp"

namespace vst {

template <typename T>
AlignResult<T> align(const ad::Tensor<T>& visual, const AlignmentWeights<T>& weights) {
  if (visual.rank() != 3 || visual.dim(2) != weights.q.dim(1)) {
    throw DimensionError("align: visual " + ad::shape_str(visual.shape()) + " incompatible with Q " +
                         ad::shape_str(weights.q.shape()));
  }
  // (V Q^T)^T == Q V^T, batched over B.
  auto scores = ad::transpose(ad::matmul(visual, ad::transpose(weights.q, 0, 1)), 1, 2);
  auto attn = ad::softmax(scores, -1);
  return {ad::matmul(attn, visual), attn};
}

template <typename T>
std::vector<Heatmap> attention_heatmaps(std::span<const T> attention, int rows, GridShape grid, GridShape image) {
  const auto n = static_cast<std::size_t>(grid.height) * static_cast<std::size_t>(grid.width);
  if (grid.height <= 0 || grid.width <= 0 || rows <= 0 || attention.size() != n * static_cast<std::size_t>(rows)) {
    throw DimensionError("attention_heatmaps: " + std::to_string(attention.size()) + " weights do not form " +
                         std::to_string(rows) + " rows of " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width));
  }
  std::vector<Heatmap> maps;
  for (int r = 0; r < rows; ++r) {
    std::vector<double> plane(attention.begin() + static_cast<std::ptrdiff_t>(r * n),
                              attention.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    auto up = resize_bilinear(plane, grid.height, grid.width, image.height, image.width);
    const auto [lo, hi] = std::minmax_element(up.begin(), up.end());
    const double low = *lo, range = *hi - *lo;
    for (auto& v : up) v = range > 0.0 ? (v - low) / range : 0.0;
    maps.push_back({image.height, image.width, std::move(up)});
  }
  return maps;
}

template AlignResult<float> align(const ad::Tensor<float>&, const AlignmentWeights<float>&);
template AlignResult<double> align(const ad::Tensor<double>&, const AlignmentWeights<double>&);
template std::vector<Heatmap> attention_heatmaps<float>(std::span<const float>, int, GridShape, GridShape);
template std::vector<Heatmap> attention_heatmaps<double>(std::span<const double>, int, GridShape, GridShape);

}  // namespace vst
