#include "vst/nn/backbone.hpp"

#include <cmath>

#include "vst/autodiff/ops.hpp"

namespace vst::nn {

BackboneConfig BackboneConfig::full_preset() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::toy_preset() {
  BackboneConfig c;
  c.stem_channels = 16;
  c.block_counts = {1, 1, 1, 1};
  c.channels = {16, 32, 48, 64};
  c.output_dim = 64;
  return c;
}

int BackboneConfig::total_stride_h() const {
  int s = stem_stride.h;
  for (const auto& st : strides) s *= st.h;
  return s;
}

int BackboneConfig::total_stride_w() const {
  int s = stem_stride.w;
  for (const auto& st : strides) s *= st.w;
  return s;
}

void BackboneConfig::validate() const {
  if (in_channels <= 0 || stem_channels <= 0 || output_dim <= 0) throw ConfigError("backbone: channel counts must be positive");
  for (int i = 0; i < 4; ++i) {
    if (block_counts[static_cast<std::size_t>(i)] < 1) throw ConfigError("backbone: every layer needs at least one block");
    if (channels[static_cast<std::size_t>(i)] <= 0) throw ConfigError("backbone: channel counts must be positive");
    if (strides[static_cast<std::size_t>(i)].h < 1 || strides[static_cast<std::size_t>(i)].w < 1)
      throw ConfigError("backbone: strides must be >= 1");
  }
  if (stem_stride.h < 1 || stem_stride.w < 1) throw ConfigError("backbone: strides must be >= 1");
}

std::pair<int, int> BackboneConfig::output_size(int height, int width) const {
  const int sh = total_stride_h(), sw = total_stride_w();
  if (height <= 0 || width <= 0 || height % sh != 0 || width % sw != 0) {
    throw DimensionError("backbone: input " + std::to_string(height) + "x" + std::to_string(width) +
                         " incompatible with stride schedule; height must be a multiple of " + std::to_string(sh) +
                         " and width a multiple of " + std::to_string(sw));
  }
  return {height / sh, width / sw};
}

namespace {

double he_std(int fan_in) { return std::sqrt(2.0 / fan_in); }

}  // namespace

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, ParameterStore<T>& store, const std::string& prefix)
    : config_(config) {
  config_.validate();
  auto make_conv = [&](const std::string& name, int in, int out, int k, Stride stride, double gain) {
    Conv c;
    c.weight = store.create(name + ".w", {out, in, k, k}, Init::normal(gain * he_std(in * k * k)));
    c.bias = store.create(name + ".b", {out}, Init::zeros());
    c.stride = stride;
    c.pad = k / 2;
    return c;
  };

  stem_ = make_conv(prefix + ".stem", config_.in_channels, config_.stem_channels, 3, config_.stem_stride, 1.0);
  int in = config_.stem_channels;
  for (int layer = 0; layer < 4; ++layer) {
    const auto l = static_cast<std::size_t>(layer);
    for (int b = 0; b < config_.block_counts[l]; ++b) {
      const std::string name = prefix + ".layer" + std::to_string(layer) + ".block" + std::to_string(b);
      const Stride stride = b == 0 ? config_.strides[l] : Stride{1, 1};
      const int out = config_.channels[l];
      Block block;
      block.conv1 = make_conv(name + ".conv1", in, out, 3, stride, 1.0);
      // Small residual branch at init keeps the un-normalized stack stable.
      block.conv2 = make_conv(name + ".conv2", out, out, 3, {1, 1}, 0.25);
      if (in != out || stride.h != 1 || stride.w != 1) {
        block.has_projection = true;
        block.projection = make_conv(name + ".proj", in, out, 1, stride, 1.0);
      }
      blocks_.push_back(std::move(block));
      in = out;
    }
  }
  if (in != config_.output_dim) {
    has_output_projection_ = true;
    output_projection_ = make_conv(prefix + ".out_proj", in, config_.output_dim, 1, {1, 1}, 1.0);
  }
}

template <typename T>
ad::Tensor<T> Backbone<T>::apply(const Conv& conv, const ad::Tensor<T>& x) {
  return ad::conv2d(x, conv.weight, conv.bias, {conv.stride.h, conv.stride.w, conv.pad, conv.pad});
}

template <typename T>
ad::Tensor<T> Backbone<T>::forward(const ad::Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.in_channels) {
    throw DimensionError("backbone: expected B x " + std::to_string(config_.in_channels) + " x H x W input, got " +
                         ad::shape_str(images.shape()));
  }
  config_.output_size(static_cast<int>(images.dim(2)), static_cast<int>(images.dim(3)));
  auto x = ad::relu(apply(stem_, images));
  for (const auto& block : blocks_) {
    auto branch = apply(block.conv2, ad::relu(apply(block.conv1, x)));
    auto shortcut = block.has_projection ? apply(block.projection, x) : x;
    x = ad::relu(ad::add(branch, shortcut));
  }
  if (has_output_projection_) x = apply(output_projection_, x);
  return x;
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace vst::nn
