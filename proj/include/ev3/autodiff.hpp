#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "ev3/tensor.hpp"

namespace ev3::ad {

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  AddRow,
  Mul,
  Scale,
  Relu,
  LogSoftmax,
  Sum,
  Mean,
  Loss,
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the
/// tape lives.
class Var {
 public:
  Var() = default;
  Var(const Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  std::size_t index() const { return index_; }
  const Tape* tape() const { return tape_; }
  const Tensor& value() const;

 private:
  const Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Result of a backward pass: one gradient per tracked node.
class Gradients {
 public:
  Gradients(std::vector<std::optional<Tensor>> grads, std::vector<bool> tracked,
            std::vector<std::pair<std::size_t, std::size_t>> shapes);

  /// Gradient of the output with respect to `v`. Nodes the output does not
  /// depend on yield a zero tensor of the node's shape.
  Tensor of(Var v) const;

 private:
  std::vector<std::optional<Tensor>> grads_;
  std::vector<bool> tracked_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
};

/// Define-by-run tape. Nodes are appended in evaluation order, so parent
/// indices always precede the child. Single-threaded; separate tapes are
/// independent.
class Tape {
 public:
  /// Adds the node's contribution to each parent's gradient accumulator.
  /// A null slot means that parent is not tracked.
  using BackwardFn = std::function<void(const Tensor& upstream, std::span<Tensor* const> parents)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Tensor value;
    BackwardFn backward;
    bool tracked;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable input.
  Var leaf(Tensor value);
  /// An input whose gradient is never needed.
  Var constant(Tensor value);
  Var record(OpKind kind, Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from `output`, which must be a 1x1 node of this tape. Does
  /// not mutate the tape, so it can be replayed.
  Gradients backward(Var output) const;

 private:
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Broadcast-add a 1 x cols row to every row of `a`.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var log_softmax(Var a);
Var sum(Var a);
Var mean(Var a);

}  // namespace ev3::ad
