#include "cmr/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "cmr/errors.hpp"

namespace cmr::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct View {
  std::size_t rows;
  std::size_t cols;
};

// A rank-1 operand is a row on the left of a product, a column on the right.
View left_view(const Tensor& t) { return t.rank() == 2 ? View{t.shape()[0], t.shape()[1]} : View{1, t.size()}; }
View right_view(const Tensor& t) { return t.rank() == 2 ? View{t.shape()[0], t.shape()[1]} : View{t.size(), 1}; }

ConstMatrixMap cmap(const Tensor& t, View v) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols));
}
MatrixMap mmap(Tensor& t, View v) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols));
}

void require_rank(const Tensor& t, std::size_t lo, std::size_t hi, const char* op) {
  if (t.rank() < lo || t.rank() > hi)
    throw ShapeError(std::string(op) + ": unsupported operand shape " + shape_string(t.shape()));
}

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw DomainError("operands belong to different graphs");
  return a.graph();
}

template <class F>
Var unary(Var a, OpKind kind, F forward, std::function<double(double x, double y)> derivative) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(x[i]);
  const std::size_t ia = a.id();
  return g.record(kind, {ia}, std::move(out), [ia, derivative](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * derivative(x[i], y[i]);
  });
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Linear: return "linear";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Row: return "row";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::Dropout: return "dropout";
    case OpKind::Embedding: return "embedding";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::LstmSequence: return "lstm_sequence";
    case OpKind::GruCell: return "gru_cell";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::input(Tensor value, bool requires_grad) {
  Node node;
  node.kind = OpKind::Input;
  node.requires_grad = requires_grad;
  if (requires_grad) node.grad = Tensor::zeros_like(value);
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& parameter) {
  if (parameter.grad.shape() != parameter.value.shape()) parameter.grad = Tensor::zeros_like(parameter.value);
  Node node;
  node.kind = OpKind::Param;
  node.parameter = &parameter;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  Node node;
  node.kind = kind;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.parameter ? node.parameter->value : node.value;
}

Tensor& Graph::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.parameter) return node.parameter->grad;
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor::zeros_like(node.value);
  return node.grad;
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw DomainError("backward: root belongs to another graph");
  const Tensor& root_value = value(root.id());
  if (root_value.size() != 1)
    throw DomainError("backward: root must be scalar, got shape " + shape_string(root_value.shape()));
  for (std::size_t i = 0; i <= root.id(); ++i) {
    Node& node = nodes_[i];
    if (node.backward) node.grad = Tensor::zeros_like(node.value);
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad(root.id())[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_rank(ta, 1, 2, "matmul");
  require_rank(tb, 1, 2, "matmul");
  const View va = left_view(ta), vb = right_view(tb);
  if (va.cols != vb.rows)
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(ta.shape()) + " x " + shape_string(tb.shape()));
  Shape shape;
  if (ta.rank() == 2) shape.push_back(va.rows);
  if (tb.rank() == 2) shape.push_back(vb.cols);
  if (shape.empty()) shape.push_back(1);
  Tensor out(shape);
  const View vc{va.rows, vb.cols};
  mmap(out, vc).noalias() = cmap(ta, va) * cmap(tb, vb);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::MatMul, {ia, ib}, std::move(out), [ia, ib, va, vb, vc](Graph& g, std::size_t self) {
    const auto dc = cmap(g.grad(self), vc);
    if (g.requires_grad(ia)) mmap(g.grad(ia), va).noalias() += dc * cmap(g.value(ib), vb).transpose();
    if (g.requires_grad(ib)) mmap(g.grad(ib), vb).noalias() += cmap(g.value(ia), va).transpose() * dc;
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_rank(ta, 1, 2, "matmul_nt");
  require_rank(tb, 1, 2, "matmul_nt");
  const View va = left_view(ta), vb = left_view(tb);
  if (va.cols != vb.cols)
    throw ShapeError("matmul_nt: inner dimensions differ, " + shape_string(ta.shape()) + " x " +
                     shape_string(tb.shape()) + "^T");
  Shape shape;
  if (ta.rank() == 2) shape.push_back(va.rows);
  if (tb.rank() == 2) shape.push_back(vb.rows);
  if (shape.empty()) shape.push_back(1);
  Tensor out(shape);
  const View vc{va.rows, vb.rows};
  mmap(out, vc).noalias() = cmap(ta, va) * cmap(tb, vb).transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::MatMulNT, {ia, ib}, std::move(out), [ia, ib, va, vb, vc](Graph& g, std::size_t self) {
    const auto dc = cmap(g.grad(self), vc);
    if (g.requires_grad(ia)) mmap(g.grad(ia), va).noalias() += dc * cmap(g.value(ib), vb);
    if (g.requires_grad(ib)) mmap(g.grad(ib), vb).noalias() += dc.transpose() * cmap(g.value(ia), va);
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  Graph& g = same_graph(x, weight);
  const Tensor& tx = x.value();
  const Tensor& tw = weight.value();
  require_rank(tx, 1, 2, "linear");
  if (tw.rank() != 2) throw ShapeError("linear: weight must be a matrix, got " + shape_string(tw.shape()));
  const View vx = left_view(tx), vw = left_view(tw);
  if (vx.cols != vw.cols)
    throw ShapeError("linear: input " + shape_string(tx.shape()) + " does not match weight " + shape_string(tw.shape()));
  if (bias) {
    same_graph(x, *bias);
    if (bias->value().rank() != 1 || bias->value().size() != vw.rows)
      throw ShapeError("linear: bias " + shape_string(bias->value().shape()) + " does not match weight " +
                       shape_string(tw.shape()));
  }
  Shape shape = tx.rank() == 2 ? Shape{vx.rows, vw.rows} : Shape{vw.rows};
  Tensor out(shape);
  const View vy{vx.rows, vw.rows};
  auto y = mmap(out, vy);
  y.noalias() = cmap(tx, vx) * cmap(tw, vw).transpose();
  std::vector<std::size_t> ids{x.id(), weight.id()};
  if (bias) {
    y.rowwise() += cmap(bias->value(), View{1, vw.rows}).row(0);
    ids.push_back(bias->id());
  }
  const std::size_t ix = x.id(), iw = weight.id();
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  return g.record(OpKind::Linear, std::move(ids), std::move(out), [ix, iw, ib, vx, vw, vy](Graph& g, std::size_t self) {
    const auto dy = cmap(g.grad(self), vy);
    if (g.requires_grad(ix)) mmap(g.grad(ix), vx).noalias() += dy * cmap(g.value(iw), vw);
    if (g.requires_grad(iw)) mmap(g.grad(iw), vw).noalias() += dy.transpose() * cmap(g.value(ix), vx);
    if (ib && g.requires_grad(*ib)) mmap(g.grad(*ib), View{1, vw.rows}) += dy.colwise().sum();
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const bool broadcast = ta.rank() == 2 && tb.rank() == 1 && tb.size() == ta.cols();
  if (!broadcast) check_same_shape(ta, tb, "add");
  Tensor out = ta;
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[broadcast ? i % cols : i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::Add, {ia, ib}, std::move(out), [ia, ib, broadcast, cols](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[broadcast ? i % cols : i] += dy[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& tb = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::Sub, {ia, ib}, std::move(out), [ia, ib](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& tb = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::Mul, {ia, ib}, std::move(out), [ia, ib](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      const Tensor& vb = g.value(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * vb[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      const Tensor& va = g.value(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * va[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, OpKind::Scale, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var tanh(Var a) {
  return unary(a, OpKind::Tanh, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, OpKind::Sigmoid, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, OpKind::Relu, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax: temperature must be positive");
  const Tensor& x = logits.value();
  require_rank(x, 1, 2, "softmax");
  if (x.empty() || x.cols() == 0) throw DomainError("softmax: empty input");
  Tensor out(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* y = out.data() + r * cols;
    const double top = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp((in[c] - top) / tau);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  const std::size_t ix = logits.id();
  return logits.graph().record(OpKind::Softmax, {ix}, std::move(out), [ix, tau, rows, cols](Graph& g, std::size_t self) {
    if (!g.requires_grad(ix)) return;
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * cols;
      double inner = 0.0;
      for (std::size_t c = 0; c < cols; ++c) inner += dy[base + c] * y[base + c];
      for (std::size_t c = 0; c < cols; ++c) dx[base + c] += y[base + c] * (dy[base + c] - inner) / tau;
    }
  });
}

Var concat(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != tb.rank() || ta.rank() == 0 ||
      !std::equal(ta.shape().begin(), ta.shape().end() - 1, tb.shape().begin()))
    throw ShapeError("concat: leading dimensions differ, " + shape_string(ta.shape()) + " vs " +
                     shape_string(tb.shape()));
  const std::size_t p = ta.cols(), q = tb.cols();
  const std::size_t n_rows = ta.rank() == 2 ? ta.shape()[0] : 1;
  Shape shape = ta.shape();
  shape.back() = p + q;
  Tensor out(shape);
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::copy_n(ta.data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(tb.data() + r * q, q, out.data() + r * (p + q) + p);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::Concat, {ia, ib}, std::move(out), [ia, ib, p, q, n_rows](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const bool ga = g.requires_grad(ia), gb = g.requires_grad(ib);
    Tensor* da = ga ? &g.grad(ia) : nullptr;
    Tensor* db = gb ? &g.grad(ib) : nullptr;
    for (std::size_t r = 0; r < n_rows; ++r) {
      const double* src = dy.data() + r * (p + q);
      if (da)
        for (std::size_t c = 0; c < p; ++c) (*da)[r * p + c] += src[c];
      if (db)
        for (std::size_t c = 0; c < q; ++c) (*db)[r * q + c] += src[p + c];
    }
  });
}

Var slice(Var vector, std::size_t start, std::size_t length) {
  const Tensor& x = vector.value();
  if (x.rank() != 1) throw ShapeError("slice: expected a vector, got " + shape_string(x.shape()));
  if (start + length > x.size())
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds " + shape_string(x.shape()));
  Tensor out({length});
  std::copy_n(x.data() + start, length, out.data());
  const std::size_t ix = vector.id();
  return vector.graph().record(OpKind::Slice, {ix}, std::move(out), [ix, start, length](Graph& g, std::size_t self) {
    if (!g.requires_grad(ix)) return;
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t i = 0; i < length; ++i) dx[start + i] += dy[i];
  });
}

Var row(Var matrix, std::size_t index) {
  const Tensor& x = matrix.value();
  if (x.rank() != 2) throw ShapeError("row: expected a matrix, got " + shape_string(x.shape()));
  if (index >= x.shape()[0])
    throw ShapeError("row: index " + std::to_string(index) + " out of range for " + shape_string(x.shape()));
  const std::size_t cols = x.cols();
  Tensor out({cols});
  std::copy_n(x.data() + index * cols, cols, out.data());
  const std::size_t ix = matrix.id();
  return matrix.graph().record(OpKind::Row, {ix}, std::move(out), [ix, index, cols](Graph& g, std::size_t self) {
    if (!g.requires_grad(ix)) return;
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t c = 0; c < cols; ++c) dx[index * cols + c] += dy[c];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DomainError("stack_rows: no rows");
  Graph& g = rows.front().graph();
  const std::size_t cols = rows.front().value().size();
  Tensor out({rows.size(), cols});
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = rows[r].value();
    if (&rows[r].graph() != &g) throw DomainError("stack_rows: rows belong to different graphs");
    if (v.rank() != 1 || v.size() != cols)
      throw ShapeError("stack_rows: row " + std::to_string(r) + " has shape " + shape_string(v.shape()));
    std::copy_n(v.data(), cols, out.data() + r * cols);
    ids.push_back(rows[r].id());
  }
  return g.record(OpKind::StackRows, ids, std::move(out), [ids, cols](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!g.requires_grad(ids[r])) continue;
      Tensor& dx = g.grad(ids[r]);
      for (std::size_t c = 0; c < cols; ++c) dx[c] += dy[r * cols + c];
    }
  });
}

Var dropout(Var x, const Tensor& mask) {
  check_same_shape(x.value(), mask, "dropout");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ix = x.id();
  return x.graph().record(OpKind::Dropout, {ix}, std::move(out), [ix, mask](Graph& g, std::size_t self) {
    if (!g.requires_grad(ix)) return;
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw ShapeError("embedding: table must be a matrix, got " + shape_string(t.shape()));
  const std::size_t vocab = t.shape()[0], dim = t.shape()[1];
  Tensor out({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw DomainError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * dim, dim, out.data() + i * dim);
  }
  const std::size_t it = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return table.graph().record(OpKind::Embedding, {it}, std::move(out), [it, rows, dim](Graph& g, std::size_t self) {
    if (!g.requires_grad(it)) return;
    const Tensor& dy = g.grad(self);
    Tensor& dt = g.grad(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = dt.data() + static_cast<std::size_t>(rows[i]) * dim;
      for (std::size_t c = 0; c < dim; ++c) dst[c] += dy[i * dim + c];
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double total = 0.0;
  for (double v : x.values()) total += v;
  const std::size_t ia = a.id();
  return a.graph().record(OpKind::Sum, {ia}, Tensor::vector({total}), [ia](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const double dy = g.grad(self)[0];
    for (double& d : g.grad(ia).values()) d += dy;
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.empty()) throw DomainError("mean: empty input");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.size());
  const std::size_t ia = a.id();
  return a.graph().record(OpKind::Mean, {ia}, Tensor::vector({total / n}), [ia, n](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const double dy = g.grad(self)[0] / n;
    for (double& d : g.grad(ia).values()) d += dy;
  });
}

Var dot(Var a, Var b) {
  if (a.value().rank() != 1 || b.value().rank() != 1)
    throw ShapeError("dot: expected vectors, got " + shape_string(a.value().shape()) + " and " +
                     shape_string(b.value().shape()));
  return matmul(a, b);
}

Var mean_rows(Var matrix) {
  const Tensor& x = matrix.value();
  if (x.rank() != 2 || x.shape()[0] == 0) throw DomainError("mean_rows: expected a non-empty matrix");
  const std::size_t rows = x.shape()[0], cols = x.cols();
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x(r, c);
  for (double& v : out.values()) v /= static_cast<double>(rows);
  const std::size_t ix = matrix.id();
  return matrix.graph().record(OpKind::MeanRows, {ix}, std::move(out), [ix, rows, cols](Graph& g, std::size_t self) {
    if (!g.requires_grad(ix)) return;
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += dy[c] / static_cast<double>(rows);
  });
}

Var weighted_sum(Var weights, Var rows) {
  if (weights.value().rank() != 1 || rows.value().rank() != 2)
    throw ShapeError("weighted_sum: expected [n] weights and [n x d] rows, got " +
                     shape_string(weights.value().shape()) + " and " + shape_string(rows.value().shape()));
  return matmul(weights, rows);
}

Var cross_entropy(Var logits, std::span<const int> targets, double tau) {
  if (!(tau > 0.0)) throw DomainError("cross_entropy: temperature must be positive");
  const Tensor& x = logits.value();
  require_rank(x, 1, 2, "cross_entropy");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (targets.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " rows");
  if (cols == 0) throw DomainError("cross_entropy: empty distribution");
  Tensor probs(x.shape());
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= cols)
      throw DomainError("cross_entropy: target " + std::to_string(targets[r]) + " outside " + std::to_string(cols));
    const double* in = x.data() + r * cols;
    double* p = probs.data() + r * cols;
    const double top = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp((in[c] - top) / tau);
      total += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
    out[r] = std::log(total) - (in[targets[r]] - top) / tau;
  }
  const std::size_t ix = logits.id();
  std::vector<int> gold(targets.begin(), targets.end());
  return logits.graph().record(
      OpKind::CrossEntropy, {ix}, std::move(out),
      [ix, gold, probs = std::move(probs), tau, cols](Graph& g, std::size_t self) {
        if (!g.requires_grad(ix)) return;
        const Tensor& dy = g.grad(self);
        Tensor& dx = g.grad(ix);
        for (std::size_t r = 0; r < gold.size(); ++r) {
          const double scale = dy[r] / tau;
          for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += scale * probs[r * cols + c];
          dx[r * cols + static_cast<std::size_t>(gold[r])] -= scale;
        }
      });
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var lstm_sequence(Var projected, Var recurrent, bool reverse) {
  Graph& g = same_graph(projected, recurrent);
  const Tensor& xp = projected.value();
  const Tensor& u = recurrent.value();
  if (u.rank() != 2 || u.shape()[0] != 4 * u.shape()[1])
    throw ShapeError("lstm_sequence: recurrent weight must be [4h x h], got " + shape_string(u.shape()));
  const std::size_t h = u.shape()[1];
  if (xp.rank() != 2 || xp.shape()[1] != 4 * h)
    throw ShapeError("lstm_sequence: projections " + shape_string(xp.shape()) + " do not match hidden size " +
                     std::to_string(h));
  const std::size_t len = xp.shape()[0];

  // Per step: activated gates [4h], cell, tanh(cell); rows in time order.
  auto gates = std::make_shared<Tensor>(Shape{len, 4 * h});
  auto cells = std::make_shared<Tensor>(Shape{len, h});
  auto cell_tanh = std::make_shared<Tensor>(Shape{len, h});
  Tensor out({len, h});
  const auto U = cmap(u, {4 * h, h});
  Eigen::VectorXd pre(4 * h);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    pre.noalias() = U * h_prev;
    auto gate = gates->row(t);
    for (std::size_t k = 0; k < 4 * h; ++k) {
      const double a = pre[static_cast<Eigen::Index>(k)] + xp(t, k);
      gate[k] = (k >= 2 * h && k < 3 * h) ? std::tanh(a) : logistic(a);
    }
    for (std::size_t k = 0; k < h; ++k) {
      const auto e = static_cast<Eigen::Index>(k);
      const double c = gate[h + k] * c_prev[e] + gate[k] * gate[2 * h + k];
      const double tc = std::tanh(c);
      (*cells)(t, k) = c;
      (*cell_tanh)(t, k) = tc;
      c_prev[e] = c;
      h_prev[e] = gate[3 * h + k] * tc;
      out(t, k) = h_prev[e];
    }
  }

  const std::size_t ix = projected.id(), iu = recurrent.id();
  return g.record(OpKind::LstmSequence, {ix, iu}, std::move(out),
                  [ix, iu, h, len, reverse, gates, cells, cell_tanh](Graph& g, std::size_t self) {
                    const Tensor& dy = g.grad(self);
                    const Tensor& y = g.value(self);
                    const auto U = cmap(g.value(iu), {4 * h, h});
                    // Pre-activation gradients and the previous hidden state per step.
                    RowMatrix da = RowMatrix::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(4 * h));
                    RowMatrix prev = RowMatrix::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(h));
                    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
                    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
                    for (std::size_t step = len; step-- > 0;) {
                      const std::size_t t = reverse ? len - 1 - step : step;
                      const bool first = step == 0;
                      const std::size_t tp = reverse ? t + 1 : t - 1;  // previous step in processing order
                      const auto gate = gates->row(t);
                      const auto r = static_cast<Eigen::Index>(t);
                      for (std::size_t k = 0; k < h; ++k) {
                        const auto e = static_cast<Eigen::Index>(k);
                        const double i = gate[k], f = gate[h + k], c_hat = gate[2 * h + k], o = gate[3 * h + k];
                        const double tc = (*cell_tanh)(t, k);
                        const double c_prev = first ? 0.0 : (*cells)(tp, k);
                        const double dh = dy(t, k) + dh_next[e];
                        const double dc = dh * o * (1.0 - tc * tc) + dc_next[e];
                        da(r, e) = dc * c_hat * i * (1.0 - i);
                        da(r, static_cast<Eigen::Index>(h + k)) = dc * c_prev * f * (1.0 - f);
                        da(r, static_cast<Eigen::Index>(2 * h + k)) = dc * i * (1.0 - c_hat * c_hat);
                        da(r, static_cast<Eigen::Index>(3 * h + k)) = dh * tc * o * (1.0 - o);
                        dc_next[e] = dc * f;
                        prev(r, e) = first ? 0.0 : y(tp, k);
                      }
                      dh_next.noalias() = U.transpose() * da.row(r).transpose();
                    }
                    if (g.requires_grad(ix)) mmap(g.grad(ix), {len, 4 * h}) += da;
                    if (g.requires_grad(iu)) mmap(g.grad(iu), {4 * h, h}).noalias() += da.transpose() * prev;
                  });
}

Var gru_cell(Var x_part, Var h_part, Var h_prev) {
  Graph& g = same_graph(x_part, h_part);
  same_graph(x_part, h_prev);
  const Tensor& xp = x_part.value();
  const Tensor& hp = h_part.value();
  const Tensor& hv = h_prev.value();
  const std::size_t h = hv.size();
  if (hv.rank() != 1 || xp.rank() != 1 || hp.rank() != 1 || xp.size() != 3 * h || hp.size() != 3 * h)
    throw ShapeError("gru_cell: expected [3h], [3h], [h], got " + shape_string(xp.shape()) + ", " +
                     shape_string(hp.shape()) + ", " + shape_string(hv.shape()));
  auto acts = std::make_shared<Tensor>(Shape{3 * h});  // z, r, n
  Tensor out({h});
  for (std::size_t k = 0; k < h; ++k) {
    const double z = logistic(xp[k] + hp[k]);
    const double r = logistic(xp[h + k] + hp[h + k]);
    const double n = std::tanh(xp[2 * h + k] + r * hp[2 * h + k]);
    (*acts)[k] = z;
    (*acts)[h + k] = r;
    (*acts)[2 * h + k] = n;
    out[k] = hv[k] + z * (n - hv[k]);
  }
  const std::size_t ix = x_part.id(), ih = h_part.id(), is = h_prev.id();
  return g.record(OpKind::GruCell, {ix, ih, is}, std::move(out), [ix, ih, is, h, acts](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& hp = g.value(ih);
    const Tensor& hv = g.value(is);
    Tensor dxp({3 * h}), dhp({3 * h});
    Tensor dprev({h});
    for (std::size_t k = 0; k < h; ++k) {
      const double z = (*acts)[k], r = (*acts)[h + k], n = (*acts)[2 * h + k];
      const double d = dy[k];
      dprev[k] = d * (1.0 - z);
      const double daz = d * (n - hv[k]) * z * (1.0 - z);
      const double dan = d * z * (1.0 - n * n);
      const double dar = dan * hp[2 * h + k] * r * (1.0 - r);
      dxp[k] = daz;
      dhp[k] = daz;
      dxp[h + k] = dar;
      dhp[h + k] = dar;
      dxp[2 * h + k] = dan;
      dhp[2 * h + k] = dan * r;
    }
    auto accumulate = [&](std::size_t id, const Tensor& d) {
      if (!g.requires_grad(id)) return;
      Tensor& target = g.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) target[i] += d[i];
    };
    accumulate(ix, dxp);
    accumulate(ih, dhp);
    accumulate(is, dprev);
  });
}

}  // namespace cmr::ad
