#include "vst/data/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vst/errors.hpp"

namespace vst::data {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {
double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }
}  // namespace

WeightedSampler::WeightedSampler(std::vector<std::size_t> source_sizes, std::vector<double> weights,
                                 std::uint64_t seed)
    : sizes_(std::move(source_sizes)), seed_(seed) {
  if (sizes_.empty()) throw ConfigError("sampler: no sources");
  if (weights.size() != sizes_.size()) throw ConfigError("sampler: one weight per source required");
  double total = 0.0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] == 0) throw ConfigError("sampler: source " + std::to_string(i) + " is empty");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw ConfigError("sampler: weight of source " + std::to_string(i) + " must be positive");
    total += weights[i];
  }
  double acc = 0.0;
  for (double w : weights) cumulative_.push_back(acc += w / total);
  cumulative_.back() = 1.0;
}

SampleRef WeightedSampler::draw(std::uint64_t k) const {
  const std::uint64_t h1 = splitmix64(seed_ ^ splitmix64(k));
  const std::uint64_t h2 = splitmix64(h1);
  const double u = to_unit(h1);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const auto source = std::min(static_cast<std::size_t>(it - cumulative_.begin()), sizes_.size() - 1);
  const auto index = std::min(static_cast<std::size_t>(to_unit(h2) * static_cast<double>(sizes_[source])),
                              sizes_[source] - 1);
  return {source, index};
}

}  // namespace vst::data
