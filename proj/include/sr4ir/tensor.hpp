#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sr4ir/common.hpp"

namespace sr4ir {

// Dense row-major tensor. The handle is a cheap value type: copies share the
// underlying data and grad buffers. Data is treated as immutable once a tape
// has recorded over it; grad buffers and optimizer-owned parameters are the
// only in-place mutation points.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : data_(std::make_shared<std::vector<T>>(shape_numel(shape), T(0))),
        shape_(std::move(shape)) {
    set_requires_grad(requires_grad);
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (T& v : *t.data_) v = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    check(shape_numel(shape) == int64_t(values.size()),
          "tensor: data length " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    t.set_requires_grad(requires_grad);
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  int64_t numel() const { return data_ ? int64_t(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  std::vector<T>& vec() { return *data_; }
  const std::vector<T>& vec() const { return *data_; }

  bool requires_grad() const { return requires_grad_; }

  // grad buffer exists iff requires_grad is set
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
      if (!grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
    } else {
      grad_.reset();
    }
  }

  T* grad() { return grad_ ? grad_->data() : nullptr; }
  const T* grad() const { return grad_ ? grad_->data() : nullptr; }

  void zero_grad() {
    if (grad_)
      for (T& g : *grad_) g = T(0);
  }

  int node() const { return node_; }
  void set_node(int id) { node_ = id; }

  T item() const {
    check(numel() == 1, "item: tensor is not scalar, shape " + shape_str(shape_));
    return (*data_)[0];
  }

  T at(std::initializer_list<int> idx) const {
    int64_t off = 0;
    size_t i = 0;
    for (int v : idx) off = off * shape_[i++] + v;
    return (*data_)[size_t(off)];
  }

  // deep copy of data; no grad, no tape node
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  // shares data, drops grad tracking
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

  uint64_t checksum() const {
    return data_ ? fnv1a(data_->data(), data_->size() * sizeof(T)) : 0;
  }

 private:
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
  Shape shape_;
  bool requires_grad_ = false;
  int node_ = -1;
};

// Integer tensor for labels (class ids or per-pixel maps). Never on the tape.
struct IntTensor {
  Shape shape;
  std::vector<int32_t> data;

  IntTensor() = default;
  IntTensor(Shape s, std::vector<int32_t> d) : shape(std::move(s)), data(std::move(d)) {
    check(shape_numel(shape) == int64_t(data.size()), "int tensor: shape/data mismatch");
  }
  int64_t numel() const { return int64_t(data.size()); }
};

// Reverse-mode tape. Ops append nodes in creation order, which is already a
// topological order; one backward sweep walks the nodes exactly once in
// reverse. A run owns its tape exclusively and resets it between steps.
template <typename T>
class Tape {
 public:
  struct Node {
    std::vector<int> inputs;  // node ids of recorded producers (leaves have none)
    int output;
    std::function<void()> backward;
  };

  int record(std::vector<int> input_nodes, std::function<void()> backward_fn) {
    std::vector<int> ins;
    for (int id : input_nodes)
      if (id >= 0) ins.push_back(id);
    int id = int(nodes_.size());
    nodes_.push_back(Node{std::move(ins), id, std::move(backward_fn)});
    return id;
  }

  void backward(Tensor<T>& loss) {
    check(loss.numel() == 1, "backward: loss is not scalar");
    check(loss.requires_grad() && loss.node() >= 0,
          "backward: loss was not recorded on this tape");
    check(!swept_, "backward: tape already swept; reset grads and tape first");
    loss.grad()[0] += T(1);
    for (size_t i = nodes_.size(); i-- > 0;) nodes_[i].backward();
    swept_ = true;
  }

  void reset() {
    nodes_.clear();
    swept_ = false;
  }

  bool swept() const { return swept_; }
  size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace sr4ir
