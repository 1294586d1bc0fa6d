#include "vst/train/batch.hpp"

#include <algorithm>

#include "vst/errors.hpp"

namespace vst::train {

template <typename T>
ad::Tensor<T> stack_images(std::span<const data::PreprocessedImage* const> images) {
  if (images.empty()) throw ContractError("stack_images: empty batch");
  const int h = images[0]->height, w = images[0]->width;
  const std::size_t plane = static_cast<std::size_t>(3) * h * w;
  std::vector<T> values;
  values.reserve(plane * images.size());
  for (const auto* img : images) {
    if (img->height != h || img->width != w) throw DimensionError("stack_images: mixed image sizes");
    values.insert(values.end(), img->chw.begin(), img->chw.end());
  }
  return ad::Tensor<T>::from({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(values));
}

data::PreprocessedImage augment_and_preprocess(const data::Image& image, int height, int width,
                                               const Augmentation& aug, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-aug.scale_jitter, aug.scale_jitter);
  auto out = data::preprocess_image(image, height, width, 1.0 + jitter(rng));
  if (aug.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, aug.noise_std);
    for (auto& v : out.chw) v = static_cast<float>(std::clamp(v + noise(rng), -1.0, 1.0));
  }
  return out;
}

template ad::Tensor<float> stack_images<float>(std::span<const data::PreprocessedImage* const>);
template ad::Tensor<double> stack_images<double>(std::span<const data::PreprocessedImage* const>);

}  // namespace vst::train
