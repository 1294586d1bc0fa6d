#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vst/errors.hpp"

namespace vst::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct GraphNode;

// Backing store for a tensor. Several Tensor handles may point at one storage;
// that is how parameters are shared between call sites.
template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GraphNode<T>> node;
  std::uint64_t id = 0;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
using StoragePtr = std::shared_ptr<TensorStorage<T>>;

template <typename T>
struct GraphNode {
  const char* op = "";
  std::vector<StoragePtr<T>> inputs;
  // Reads out.grad and accumulates into the inputs' grad buffers.
  std::function<void(TensorStorage<T>& out, std::span<const StoragePtr<T>> inputs)> backward;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(StoragePtr<T> storage) : storage_(std::move(storage)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  int rank() const { return static_cast<int>(storage_->shape.size()); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(storage_->data.size()); }

  std::span<const T> data() const { return storage_->data; }
  // Direct write access; meant for leaves (parameters, inputs), not graph outputs.
  std::span<T> mutable_data() { return storage_->data; }
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> mutable_grad() { return storage_->grad_buffer(); }
  void zero_grad();

  bool requires_grad() const { return storage_->requires_grad; }
  bool has_node() const { return storage_->node != nullptr; }
  std::uint64_t storage_id() const { return storage_->id; }
  const StoragePtr<T>& storage() const { return storage_; }

  // Copy of the values with no graph history.
  Tensor detach() const;

 private:
  StoragePtr<T> storage_;
};

std::uint64_t next_storage_id();

// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Propagates d(loss)/d(.) to every reachable tensor that requires grad.
// Gradients are added to existing buffers. The graph is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace vst::ad
