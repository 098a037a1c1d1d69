#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cmr/tensor.hpp"

namespace cmr::ad {

/// A trainable tensor together with its gradient accumulator. Graphs read
/// the value in place and add into grad during backward.
struct Parameter {
  Parameter() = default;
  explicit Parameter(Tensor init) : value(std::move(init)), grad(Tensor::zeros_like(value)) {}

  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
  std::size_t size() const { return value.size(); }
};

enum class OpKind {
  Input,
  Param,
  MatMul,
  MatMulNT,
  Linear,
  Add,
  Sub,
  Mul,
  Scale,
  Tanh,
  Sigmoid,
  Relu,
  Softmax,
  Concat,
  Slice,
  Row,
  StackRows,
  Dropout,
  Embedding,
  Sum,
  Mean,
  MeanRows,
  CrossEntropy,
  LstmSequence,
  GruCell,
};

const char* op_name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  // Gradient accumulated by the last backward(); parameters report their
  // shared accumulator.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations in creation order, which is a topological order.
/// Single-owner: build, run backward, then discard.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf holding its own value. Its grad accumulates across backward calls.
  Var input(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return input(std::move(value), false); }
  // Leaf aliasing a parameter; gradients land in parameter.grad.
  Var param(Parameter& parameter);

  // Reverse-mode sweep from a scalar root. Intermediate gradients are reset
  // first; leaf and parameter gradients accumulate.
  void backward(Var root);

  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  Tensor& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  OpKind kind(std::size_t id) const { return nodes_[id].kind; }
  const Parameter* parameter(std::size_t id) const { return nodes_[id].parameter; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::Input;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    Parameter* parameter = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
  };

  // deque keeps references from value()/grad() valid while nodes are added.
  std::deque<Node> nodes_;
};

// Matrix products. Rank-1 operands act as a row vector on the left and a
// column vector on the right; the result drops the unit dimension.
Var matmul(Var a, Var b);
// a * b^T.
Var matmul_nt(Var a, Var b);
// x W^T + bias for x of shape [n x in] or [in], W of shape [out x in].
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);

// Elementwise. add() also broadcasts a rank-1 b across the rows of a matrix a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

/// exp(x_i / tau) / sum_j exp(x_j / tau), row-wise for matrices.
Var softmax(Var logits, double tau = 1.0);

// Concatenation along the last dimension.
Var concat(Var a, Var b);
Var slice(Var vector, std::size_t start, std::size_t length);
Var row(Var matrix, std::size_t index);
Var stack_rows(std::span<const Var> rows);

// x * mask. The mask already carries any 1/(1-p) rescaling.
Var dropout(Var x, const Tensor& mask);
Var embedding(Var table, std::span<const int> ids);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
// Mean over rows: [n x d] -> [d].
Var mean_rows(Var matrix);
// weights^T * rows: [n] x [n x d] -> [d].
Var weighted_sum(Var weights, Var rows);

/// LSTM recurrence over precomputed input projections [T x 4h] (gate blocks
/// input, forget, candidate, output) with recurrent weight [4h x h]. Returns
/// the [T x h] hidden states; `reverse` runs from the last row to the first.
/// One node with backpropagation through time inside.
Var lstm_sequence(Var projected, Var recurrent, bool reverse);

/// Elementwise GRU update from x_part = W x + b_x and h_part = U h + b_h
/// (blocks update, reset, candidate) and the previous state h.
Var gru_cell(Var x_part, Var h_part, Var h_prev);

/// Per-row negative log-likelihood of targets under softmax(logits / tau).
Var cross_entropy(Var logits, std::span<const int> targets, double tau = 1.0);

}  // namespace cmr::ad
