#pragma once

#include <cstdint>
#include <vector>

#include "vst/nn/module.hpp"

namespace vst::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One moment pair per storage slot, so a
// parameter reachable under several names is updated once per step.
template <typename T>
class Adam {
 public:
  explicit Adam(nn::ParameterStore<T>& store, AdamConfig config = {});

  // Throws ContractError if a parameter has no gradient buffer.
  void step(double lr);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  // Indexed by storage slot.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  nn::ParameterStore<T>* store_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t steps_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(nn::ParameterStore<T>& store, double max_norm);

// Holds lr_initial until the EMA of the loss has not improved by the
// relative threshold for `patience` consecutive steps, then switches to
// lr_final for good.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr_initial, double lr_final, int patience, double decay = 0.99, double threshold = 1e-3);

  double lr() const { return dropped_ ? lr_final_ : lr_initial_; }
  // Feeds one step's loss; returns the lr for the next step.
  double observe(double loss);

  bool dropped() const { return dropped_; }
  double ema() const { return ema_; }
  int steps_since_improvement() const { return since_; }

 private:
  double lr_initial_, lr_final_;
  int patience_;
  double decay_, threshold_;
  double ema_ = 0.0;
  double best_ = 0.0;
  bool started_ = false;
  bool dropped_ = false;
  int since_ = 0;
};

}  // namespace vst::train
