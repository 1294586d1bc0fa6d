#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "vst/autodiff/tensor.hpp"
#include "vst/nn/module.hpp"

namespace vst::nn {

struct Stride {
  int h = 1;
  int w = 1;
  bool operator==(const Stride&) const = default;
};

// Resnet-style feature extractor: 3x3 stem, four layers of basic blocks.
struct BackboneConfig {
  int in_channels = 3;
  int stem_channels = 64;
  Stride stem_stride{1, 1};
  std::array<int, 4> block_counts{1, 2, 5, 3};
  std::array<int, 4> channels{64, 128, 256, 512};
  std::array<Stride, 4> strides{{{1, 1}, {2, 2}, {2, 2}, {2, 1}}};
  int output_dim = 512;

  // 48x160 -> 6x40x512.
  static BackboneConfig full_preset();
  // 24x80 -> 3x20x64.
  static BackboneConfig toy_preset();

  int total_stride_h() const;
  int total_stride_w() const;
  // Spatial size after every stride; throws DimensionError if (height, width)
  // is not divisible by the stride schedule.
  std::pair<int, int> output_size(int height, int width) const;
  void validate() const;

  bool operator==(const BackboneConfig&) const = default;
};

template <typename T>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterStore<T>& store, const std::string& prefix);

  // images: B x C x H x W -> B x d x h x w.
  ad::Tensor<T> forward(const ad::Tensor<T>& images) const;

  const BackboneConfig& config() const { return config_; }

 private:
  struct Conv {
    ad::Tensor<T> weight;
    ad::Tensor<T> bias;
    Stride stride;
    int pad = 1;
  };
  struct Block {
    Conv conv1;
    Conv conv2;
    bool has_projection = false;
    Conv projection;
  };

  static ad::Tensor<T> apply(const Conv& conv, const ad::Tensor<T>& x);

  BackboneConfig config_;
  Conv stem_;
  std::vector<Block> blocks_;
  bool has_output_projection_ = false;
  Conv output_projection_;
};

}  // namespace vst::nn
