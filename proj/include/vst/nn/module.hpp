#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "vst/autodiff/tensor.hpp"

namespace vst::nn {

// A named handle onto trainable storage. Two Parameters with the same
// `slot` are the same storage seen from different call sites.
template <typename T>
struct Parameter {
  std::string name;
  ad::Tensor<T> tensor;
  std::size_t slot = 0;
  bool alias = false;
};

struct Init {
  enum class Kind { kZeros, kOnes, kNormal };
  Kind kind = Kind::kZeros;
  double stddev = 0.0;

  static Init zeros() { return {Kind::kZeros, 0.0}; }
  static Init ones() { return {Kind::kOnes, 0.0}; }
  static Init normal(double stddev) { return {Kind::kNormal, stddev}; }
};

// Owns every trainable tensor of a model, in registration order. Creation
// order fixes the random initialization, so construction is deterministic.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 1) : rng_(seed) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ad::Tensor<T> create(const std::string& name, ad::Shape shape, Init init) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    auto n = static_cast<std::size_t>(ad::shape_numel(shape));
    std::vector<T> values(n, T(0));
    if (init.kind == Init::Kind::kOnes) {
      std::fill(values.begin(), values.end(), T(1));
    } else if (init.kind == Init::Kind::kNormal) {
      std::normal_distribution<double> dist(0.0, init.stddev);
      for (auto& v : values) v = static_cast<T>(dist(rng_));
    }
    auto t = ad::Tensor<T>::from(std::move(shape), std::move(values), true);
    index_[name] = entries_.size();
    entries_.push_back({name, t, unique_count_++, false});
    return t;
  }

  // Registers another name for an existing storage (a second call site).
  void alias(const std::string& name, const std::string& target) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    const auto& src = at(target);
    index_[name] = entries_.size();
    entries_.push_back({name, src.tensor, src.slot, true});
  }

  const Parameter<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  // All names including aliases, registration order.
  const std::vector<Parameter<T>>& entries() const { return entries_; }

  // One entry per storage.
  std::vector<Parameter<T>> unique() const {
    std::vector<Parameter<T>> out;
    for (const auto& p : entries_)
      if (!p.alias) out.push_back(p);
    return out;
  }

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& p : entries_)
      if (!p.alias) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : entries_)
      if (!p.alias) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t unique_count_ = 0;
  std::mt19937_64 rng_;
};

// Per-forward-pass state: dropout switch and its random source.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  bool dropout_active() const { return training && rng != nullptr; }
};

}  // namespace vst::nn
