#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "vst/autodiff/tensor.hpp"

namespace vst::ad {

// Elementwise. `b` may also be a trailing-suffix broadcast of `a`
// (e.g. a: B x L x d, b: L x d or d).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// 2-D product, batched product with identical leading dims, or
// [..., m, k] x [k, p] with b shared across the batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// x[..., in] * w[in, out] + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

struct Conv2dParams {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

// x: B x C x H x W, w: O x C x kh x kw, bias: O (may be undefined). Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Conv2dParams params);

// Mean over rows of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

// One entry of `shape` may be -1.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Inverted dropout. Identity when rate == 0 or !training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng);

// Normalizes a possibly negative axis against `rank`.
int normalize_axis(int axis, int rank);

// Records the sign pattern of every relu input while installed. Finite
// difference checks use it to notice perturbations that cross a kink.
class ReluKinkMonitor {
 public:
  ReluKinkMonitor();
  ~ReluKinkMonitor();
  ReluKinkMonitor(const ReluKinkMonitor&) = delete;
  ReluKinkMonitor& operator=(const ReluKinkMonitor&) = delete;

  std::uint64_t signature() const { return hash_; }
  void reset() { hash_ = 1469598103934665603ull; }
  void record(bool positive, bool zero);

  static ReluKinkMonitor* active();

 private:
  std::uint64_t hash_ = 1469598103934665603ull;
  ReluKinkMonitor* previous_;
};

}  // namespace vst::ad
