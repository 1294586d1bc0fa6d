#pragma once

#include <cstdint>
#include <vector>

namespace vst::data {

struct SampleRef {
  std::size_t source = 0;
  std::size_t index = 0;

  bool operator==(const SampleRef&) const = default;
};

// Picks source i with probability w_i / sum(w), then a uniform index within
// it. Draw k is a pure function of (seed, k), so draws can be assigned to
// consumers by index without changing the sequence.
class WeightedSampler {
 public:
  // Throws ConfigError on no sources, an empty source or a non-positive weight.
  WeightedSampler(std::vector<std::size_t> source_sizes, std::vector<double> weights, std::uint64_t seed);

  SampleRef draw(std::uint64_t k) const;
  SampleRef next() { return draw(cursor_++); }

  std::uint64_t cursor() const { return cursor_; }
  void seek(std::uint64_t k) { cursor_ = k; }
  std::size_t num_sources() const { return sizes_.size(); }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> cumulative_;  // normalized, last == 1
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vst::data
