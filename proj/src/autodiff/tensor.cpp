#include "vst/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace vst::ad {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};
}  // namespace

std::uint64_t next_storage_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto s : shape) {
    if (s <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= s;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto s = std::make_shared<TensorStorage<T>>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  s->id = next_storage_id();
  return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return storage_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return storage_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw DimensionError("index rank mismatch");
  std::int64_t flat = 0;
  int axis = 0;
  for (auto i : index) {
    auto extent = storage_->shape[static_cast<std::size_t>(axis++)];
    if (i < 0 || i >= extent) throw IndexError("index out of range in " + shape_str(shape()));
    flat = flat * extent + i;
  }
  return storage_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), storage_->data, false);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  // Iterative post-order DFS; reverse of it is a valid topological order.
  std::vector<TensorStorage<T>*> order;
  std::unordered_set<TensorStorage<T>*> visited;
  std::vector<std::pair<TensorStorage<T>*, std::size_t>> stack;
  stack.emplace_back(loss.storage().get(), 0);
  visited.insert(loss.storage().get());
  while (!stack.empty()) {
    auto& [s, next] = stack.back();
    if (s->node && next < s->node->inputs.size()) {
      auto* child = s->node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(s);
      stack.pop_back();
    }
  }

  auto& seed = loss.storage()->grad_buffer();
  seed[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* s = *it;
    if (!s->node || s->grad.empty()) continue;
    s->node->backward(*s, s->node->inputs);
  }
  for (auto* s : order) s->node.reset();
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace vst::ad
