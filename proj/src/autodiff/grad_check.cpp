#include "vst/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vst/autodiff/ops.hpp"

namespace vst::ad {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double GradCheckReport::max_raw_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_raw_rel_error);
  return m;
}

std::vector<std::string> GradCheckReport::flagged(double tol) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!(e.max_rel_error <= tol)) out.push_back(e.name);
  }
  return out;
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& f, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor<double>> handles;
  for (const auto& p : params) {
    handles.push_back(p.tensor);
    handles.back().zero_grad();
  }
  backward(f());

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& t = handles[k];
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param > 0 && n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }

    GradCheckEntry entry{params[k].name, 0.0, 0.0, 0, 0};
    NoGradGuard no_grad;
    auto values = t.mutable_data();
    for (auto i : coords) {
      const double original = values[i];
      ReluKinkMonitor monitor;
      values[i] = original + options.step;
      const double plus = f().item();
      const auto sig_plus = monitor.signature();
      monitor.reset();
      values[i] = original - options.step;
      const double minus = f().item();
      const auto sig_minus = monitor.signature();
      values[i] = original;
      if (sig_plus != sig_minus) {
        ++entry.coords_skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double roundoff = options.roundoff_factor * std::numeric_limits<double>::epsilon() *
                              std::max(std::abs(plus), std::abs(minus)) / options.step;
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.denominator_floor});
      const double excess = std::max(0.0, std::abs(numeric - analytic[i]) - roundoff);
      entry.max_rel_error = std::max(entry.max_rel_error, excess / denom);
      entry.max_raw_rel_error = std::max(entry.max_raw_rel_error, std::abs(numeric - analytic[i]) / denom);
      ++entry.coords_checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace vst::ad
