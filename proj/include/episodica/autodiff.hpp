#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "episodica/tensor.hpp"

// Define-by-run reverse-mode differentiation. A Tape records each primitive
// as it executes; backward() walks the records in reverse exactly once.
// Tapes are single-threaded and meant to be rebuilt per training step.
namespace episodica::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Gradients {
 public:
  /// Gradient with respect to a leaf; zeros when the leaf did not reach the loss.
  Tensor of(Var leaf) const;
  bool reached(Var leaf) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (parameters, inputs under test).
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Throws ContractError unless `loss` holds exactly one element.
  Gradients backward(Var loss);

  // Primitive authoring interface.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& grad(std::size_t id) const { return *grads_.at(id); }
  /// Accumulation buffer for an input's gradient, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float factor);
Var add_scalar(Var a, float value);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var l2_normalize(Var a);
Var softmax_rows(Var a);
Var sum(Var a);
Var mean(Var a);
/// Same value, but cut from the graph: nothing flows back through it.
Var detach(Var a);

/// x[n x d] + bias[d] broadcast over rows.
Var add_row_bias(Var x, Var bias);
/// 3x3 convolution, zero padding 1. x[n,cin,h,w], weight[cout,cin,3,3], bias[cout].
Var conv3x3(Var x, Var weight, Var bias, std::size_t stride);
/// [n,c,h,w] -> [n,c] spatial mean.
Var global_avg_pool(Var x);

/// Per-row softmax cross-entropy over the entries allowed by `include`
/// (row-major n*m mask, empty = all): out[i] = logsumexp_{j in row i} logits[i,j] - logits[i, positive[i]].
/// The positive entry of each row must be included.
Var contrastive_ce(Var logits, std::span<const std::size_t> positive, std::span<const std::uint8_t> include);

}  // namespace episodica::ad
