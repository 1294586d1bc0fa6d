#include "vst/train/optimizer.hpp"

#include <cmath>

#include "vst/errors.hpp"

namespace vst::train {

template <typename T>
Adam<T>::Adam(nn::ParameterStore<T>& store, AdamConfig config) : store_(&store), config_(config) {
  for (const auto& p : store.unique()) {
    if (p.slot != m_.size()) throw ContractError("parameter slots are not dense");
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  const auto params = store_->unique();
  for (const auto& p : params)
    if (!p.tensor.has_grad()) throw ContractError("parameter '" + p.name + "' has no gradient");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& p : params) {
    auto tensor = p.tensor;
    const auto g = tensor.grad();
    auto w = tensor.mutable_data();
    auto& m = m_[p.slot];
    auto& v = v_[p.slot];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(nn::ParameterStore<T>& store, double max_norm) {
  double sq = 0.0;
  const auto params = store.unique();
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto tensor = p.tensor;
      for (auto& g : tensor.mutable_grad()) g = static_cast<T>(g * scale);
    }
  }
  return norm;
}

PlateauSchedule::PlateauSchedule(double lr_initial, double lr_final, int patience, double decay, double threshold)
    : lr_initial_(lr_initial), lr_final_(lr_final), patience_(patience), decay_(decay), threshold_(threshold) {
  if (!(lr_final <= lr_initial)) throw ConfigError("lr_final must not exceed lr_initial");
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("ema decay must be in [0, 1)");
}

double PlateauSchedule::observe(double loss) {
  if (!started_) {
    ema_ = best_ = loss;
    started_ = true;
    return lr();
  }
  ema_ = decay_ * ema_ + (1.0 - decay_) * loss;
  if (ema_ < best_ * (1.0 - threshold_)) {
    best_ = ema_;
    since_ = 0;
  } else if (++since_ >= patience_) {
    dropped_ = true;
  }
  return lr();
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(nn::ParameterStore<float>&, double);
template double clip_grad_norm<double>(nn::ParameterStore<double>&, double);

}  // namespace vst::train
