#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lumina/errors.hpp"

namespace lumina {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

template <class S>
class Tape;

/// Dense N-dimensional array of scalars. Copies are shallow handles onto the
/// same storage; all operations allocate fresh outputs, so aliasing is only
/// observable through explicit writes to values().
///
/// Image tensors use N x C x H x W layout throughout.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(numel(shape_), S(0))) {}

  Tensor(Shape shape, std::vector<S> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(std::move(values))) {
    if (numel(shape_) != static_cast<int64_t>(data_->size()))
      throw DimensionError("tensor: " + shape_str(shape_) + " does not hold " +
                           std::to_string(data_->size()) + " values");
  }

  static Tensor full(Shape shape, S value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }
  static Tensor scalar(S value) { return Tensor({1}, {value}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  std::span<S> values() { return {data_->data(), data_->size()}; }
  std::span<const S> values() const { return {data_->data(), data_->size()}; }
  S* data() { return data_->data(); }
  const S* data() const { return data_->data(); }

  /// The single element of a scalar tensor.
  S value() const {
    if (size() != 1)
      throw ContractError("value(): tensor " + shape_str(shape_) + " is not scalar");
    return (*data_)[0];
  }

  /// True when this tensor participates in a live computation graph. A handle
  /// that outlives its tape (tapes are rebuilt per forward pass) reads as
  /// off-tape again rather than dangling.
  bool requires_grad() const {
    return node_ >= 0 && tape_ != nullptr && !tape_live_.expired();
  }
  /// Tape node index, or -1 when off-tape. Routed through requires_grad() so
  /// a handle left over from a destroyed tape can never alias a node id on a
  /// tape that happens to reuse the same address.
  int node() const { return requires_grad() ? node_ : -1; }
  Tape<S>* tape() const { return tape_; }

  /// Gradient accumulated by the last backward() on the recording tape.
  /// Valid only while that tape is alive.
  std::span<const S> grad() const;

  const std::shared_ptr<std::vector<S>>& storage() const { return data_; }

  /// Handle onto the same storage, detached from any tape.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

 private:
  friend class Tape<S>;
  Shape shape_;
  std::shared_ptr<std::vector<S>> data_;
  Tape<S>* tape_ = nullptr;
  std::weak_ptr<void> tape_live_;
  int node_ = -1;
};

/// Reverse-mode gradient tape: an ordered record of operations, appended in
/// execution order (so inputs always precede their consumers), replayed once
/// in reverse by backward(). Rebuilt per forward pass; one tape belongs to one
/// training session.
template <class S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const S>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf (parameter or input) so downstream ops record onto this
  /// tape and backward() accumulates its gradient. Idempotent per tape; a
  /// registration left over from a destroyed tape is replaced, even if a new
  /// tape reuses the same address.
  int watch(Tensor<S>& t) {
    if (t.tape_ == this && !t.tape_live_.expired()) return t.node_;
    t.tape_ = this;
    t.tape_live_ = live_;
    t.node_ = push(t.size(), nullptr);
    return t.node_;
  }

  /// Records an op output with its backward rule. Called by the op kernels.
  int record(Tensor<S>& out, BackwardFn bw) {
    out.tape_ = this;
    out.tape_live_ = live_;
    out.node_ = push(out.size(), std::move(bw));
    return out.node_;
  }

  /// Accumulates into a node's gradient buffer through `fn(S* grad_base)`.
  /// No-op for node < 0 (constants).
  template <class Fn>
  void accum(int node, Fn&& fn) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<size_t>(node)];
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.size), S(0));
    fn(n.grad.data());
  }

  /// Single reverse traversal from a scalar loss; every reachable node is
  /// visited exactly once, and leaf gradients accumulate additively.
  void backward(const Tensor<S>& loss) {
    if (loss.tape_ != this || loss.node() < 0)
      throw ContractError("backward: loss is not recorded on this tape");
    if (loss.size() != 1)
      throw ContractError("backward: loss must be scalar, got " +
                          shape_str(loss.shape()));
    for (Node& n : nodes_) n.grad.clear();
    nodes_[static_cast<size_t>(loss.node_)].grad.assign(1, S(1));
    for (int i = loss.node_; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.grad.empty() && n.bw) n.bw(*this, {n.grad.data(), n.grad.size()});
    }
  }

  /// Gradient span for a watched/recorded tensor; zeros if nothing reached it.
  std::span<const S> grad_of(const Tensor<S>& t) {
    if (t.tape_ != this || t.node_ < 0)
      throw ContractError("grad_of: tensor is not on this tape");
    Node& n = nodes_[static_cast<size_t>(t.node_)];
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.size), S(0));
    return {n.grad.data(), n.grad.size()};
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int64_t size;
    BackwardFn bw;
    std::vector<S> grad;
  };

  int push(int64_t size, BackwardFn bw) {
    nodes_.push_back(Node{size, std::move(bw), {}});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  // Liveness token handed to tensors; expires with the tape, so stale handles
  // can tell a dead tape from a new one at the same address.
  std::shared_ptr<void> live_ = std::make_shared<char>('t');
};

template <class S>
std::span<const S> Tensor<S>::grad() const {
  if (!requires_grad())
    throw ContractError("grad(): tensor is not on a tape");
  return tape_->grad_of(*this);
}

/// The common tape of a set of operands, or nullptr when none is taped.
/// Mixing tensors from two live tapes is a usage bug.
template <class S, class... Ts>
Tape<S>* tape_of(const Tensor<S>& first, const Ts&... rest) {
  Tape<S>* tp = first.requires_grad() ? first.tape() : nullptr;
  auto merge = [&tp](const auto& t) {
    if (!t.requires_grad()) return;
    if (tp == nullptr)
      tp = t.tape();
    else if (tp != t.tape())
      throw ContractError("operands belong to different tapes");
  };
  (merge(rest), ...);
  return tp;
}

}  // namespace lumina
