#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "spg/tensor.hpp"

namespace spg {

namespace detail {
std::uint64_t next_value_id();
}

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  std::uint64_t id = detail::next_value_id();

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value participating in reverse-mode differentiation.
/// Copies share the underlying node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const Shape& shape() const { return node_->value.shape(); }
  std::uint64_t id() const { return node_->id; }
  Node<T>* node() const { return node_.get(); }

  // Value of a single-element tensor.
  T item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape().str());
    return node_->value[0];
  }

  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Ordered log of differentiable operations. Constructing a tape makes it
/// the thread's active tape until destruction; ops executed while a tape is
/// active and touching a grad-requiring input append a record.
template <typename T>
class Tape {
 public:
  struct Record {
    std::string_view op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    std::function<void()> backward;
  };

  Tape() : previous_(current_) { current_ = this; }
  ~Tape() { current_ = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  void record(std::string_view op, std::vector<std::uint64_t> inputs, std::uint64_t output,
              std::function<void()> backward) {
    records_.push_back({op, std::move(inputs), output, std::move(backward)});
  }

  // Seeds d(loss)/d(loss) = 1 and runs every record once in reverse order.
  void backward(const Var<T>& loss);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<Record> records_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
  static inline thread_local Tape* current_ = nullptr;
};

/// True when an op on these inputs must be recorded.
template <typename T>
bool needs_grad(std::initializer_list<const Var<T>*> inputs) {
  if (Tape<T>::current() == nullptr) return false;
  for (const Var<T>* v : inputs)
    if (v != nullptr && v->requires_grad()) return true;
  return false;
}

/// Marks `out` as differentiable and appends its backward closure to the
/// active tape. Callers check needs_grad() first.
template <typename T>
void record_op(std::string_view op, std::initializer_list<const Var<T>*> inputs, Var<T>& out,
               std::function<void()> backward) {
  std::vector<std::uint64_t> ids;
  ids.reserve(inputs.size());
  for (const Var<T>* v : inputs)
    if (v != nullptr && v->defined()) ids.push_back(v->id());
  out.set_requires_grad(true);
  Tape<T>::current()->record(op, std::move(ids), out.id(), std::move(backward));
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw std::logic_error("tape already consumed by a backward pass");
  consumed_ = true;
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss, got " + loss.shape().str());
  loss.node()->grad_buffer().fill(T(1));
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
  records_.clear();
}

/// Named learnable tensors (plus non-trainable buffers such as running
/// statistics), iterated in name order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Var<T> var;
    bool trainable = true;
  };

  Var<T>& add(const std::string& name, Tensor<T> init, bool trainable = true) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
    it->second.var = Var<T>(std::move(init), trainable);
    it->second.trainable = trainable;
    return it->second.var;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Var<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second.var;
  }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.var.zero_grad();
  }

  // Freezes or unfreezes every trainable entry.
  void set_trainable(bool on) {
    for (auto& [name, e] : entries_)
      if (e.trainable) e.var.set_requires_grad(on);
  }

  std::size_t numel(bool trainable_only = true) const {
    std::size_t total = 0;
    for (const auto& [name, e] : entries_)
      if (e.trainable || !trainable_only) total += e.var.value().size();
    return total;
  }

 private:
  std::map<std::string, Entry> entries_;
};

/// Copy of `v` that blocks gradient flow.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value(), false);
}

}  // namespace spg
