#pragma once

#include <random>
#include <span>
#include <vector>

#include "vst/autodiff/tensor.hpp"
#include "vst/data/dataset.hpp"
#include "vst/data/image.hpp"

namespace vst::train {

// Stacks already-preprocessed images into one tensor.
template <typename T>
ad::Tensor<T> stack_images(std::span<const data::PreprocessedImage* const> images);

// Augmentation: horizontal scale jitter (uniform in 1 +- scale_jitter) and
// additive Gaussian noise in [-1, 1] pixel units.
struct Augmentation {
  double scale_jitter = 0.1;
  double noise_std = 0.02;

  bool operator==(const Augmentation&) const = default;
};

data::PreprocessedImage augment_and_preprocess(const data::Image& image, int height, int width,
                                               const Augmentation& aug, std::mt19937_64& rng);

}  // namespace vst::train
