#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vst/autodiff/tensor.hpp"

namespace vst {

// The t x d projection Q. One instance per model; both alignment call
// sites hold handles onto the same storage.
template <typename T>
struct AlignmentWeights {
  ad::Tensor<T> q;

  std::uint64_t storage_id() const { return q.storage_id(); }
  int max_len() const { return static_cast<int>(q.dim(0)); }
  int model_dim() const { return static_cast<int>(q.dim(1)); }
};

template <typename T>
struct AlignResult {
  ad::Tensor<T> semantic;   // S: B x t x d
  ad::Tensor<T> attention;  // A: B x t x n
};

// S = softmax(Q V^T) V with the softmax taken over the n visual positions
// and no temperature.
template <typename T>
AlignResult<T> align(const ad::Tensor<T>& visual, const AlignmentWeights<T>& weights);

struct GridShape {
  int height = 0;
  int width = 0;
};

struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
};

// One heatmap per row of `attention` (t x n, row-major; n = grid.height*grid.width,
// flattened height-outer). Each row is reshaped to the grid, bilinearly
// upsampled to `image`, then min-max normalized; a constant map becomes all 0.
template <typename T>
std::vector<Heatmap> attention_heatmaps(std::span<const T> attention, int rows, GridShape grid, GridShape image);

}  // namespace vst
