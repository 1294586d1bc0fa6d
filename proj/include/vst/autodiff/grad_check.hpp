#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vst/autodiff/tensor.hpp"

namespace vst::ad {

struct NamedTensor {
  std::string name;
  Tensor<double> tensor;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coords_per_param = 0;
  // Denominator floor of the relative error, so exactly-zero gradients
  // compare absolutely.
  double denominator_floor = 1e-6;
  // Discrepancies below roundoff_factor * eps * |f| / step are within the
  // round-off of the difference quotient itself and count as zero.
  double roundoff_factor = 32.0;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  // Same ratio before the round-off allowance is subtracted.
  double max_raw_rel_error = 0.0;
  std::size_t coords_checked = 0;
  // Coordinates whose +/- perturbation flipped a relu input sign.
  std::size_t coords_skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  double max_raw_rel_error() const;
  // Names of parameters whose error exceeds `tol`.
  std::vector<std::string> flagged(double tol) const;
  bool passed(double tol) const { return flagged(tol).empty(); }
};

// Central differences (f(p+h) - f(p-h)) / 2h against the gradients that
// backward() produces for `f`. `f` must be deterministic (dropout off);
// otherwise the report is meaningless.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace vst::ad
