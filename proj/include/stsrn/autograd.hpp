#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "stsrn/tensor.hpp"

namespace stsrn {

class Tape;

// Handle to a value recorded on a Tape. Valid until the tape is cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }
  bool needs_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// What a backward rule sees: the upstream gradient and per-input gradient
// slots. An input's slot is empty when that input does not need a gradient.
class BackwardContext {
 public:
  std::span<const double> grad_output() const { return grad_output_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t k) const { return *inputs_[k]; }
  std::span<double> grad_input(std::size_t k) const { return grad_inputs_[k]; }

 private:
  friend class Tape;
  std::span<const double> grad_output_;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<std::span<double>> grad_inputs_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Single-threaded record of one forward computation, in creation order
// (which is a topological order). One tape per training context.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Borrow a caller-owned tensor. If it requires grad, backward() writes
  // d(loss)/d(leaf) into its gradient buffer. Registering the same tensor
  // twice yields the same node.
  Var leaf(Tensor& tensor);
  Var leaf(const Tensor& tensor);
  // Copy a value onto the tape with no gradient.
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss ([] or [1]); afterwards every
  // requires_grad leaf holds its full gradient and the tape is cleared.
  void backward(Var loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t index) const;
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }

  // When disabled, ops record values only; used for inference.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> leaf_index_;
  bool grad_enabled_ = true;
};

// Operators. Every op checks operand shapes (DimensionError) and registers a
// backward rule when any operand needs a gradient.

// input [C_in,H,W], weight [C_out,C_in,k,k], bias [C_out] -> [C_out,H',W'].
// Cross-correlation with zero padding.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);
// [C,H,W] -> [C,H/2,W/2]; gradient goes to the first maximal cell.
Var maxpool2(Var input);

Var tanh(Var x);
Var relu(Var x);
Var sigmoid(Var x);
// sqrt with a zero subgradient at 0.
Var sqrt(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var x, double s);
Var add_scalar(Var x, double c);

// weight [out,in] * x [in] (+ bias [out]).
Var linear(Var weight, Var x, Var bias);
Var matvec(Var weight, Var x);

Var reshape(Var x, Shape shape);
Var flatten(Var x);
// k tensors of shape S -> [k, S...]
Var stack(std::span<const Var> items);
// [T, ...] -> [...]
Var mean_over_first_axis(Var x);
Var sum(Var x);

// Numerically stable log-softmax cross entropy; ArgumentError on a bad label.
Var softmax_cross_entropy(Var logits, std::size_t label);
Var squared_l2_distance(Var a, Var b);

// Same value, cut from the graph.
Var detach(Var x);

}  // namespace stsrn
