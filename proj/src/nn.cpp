#include "cmr/nn.hpp"

#include <cmath>
#include <vector>

#include "cmr/errors.hpp"

namespace cmr::nn {

namespace {

void require_positive(std::initializer_list<std::size_t> dims, const char* what) {
  for (std::size_t d : dims)
    if (d == 0) throw DomainError(std::string(what) + ": dimensions must be positive");
}


}  // namespace

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0 || shape_size(shape) == 0)
    throw DomainError("glorot_uniform: dimensions must be positive, got " + shape_string(shape));
  const double limit = glorot_limit(fan_in, fan_out);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  require_positive({in, out}, "Linear::init");
  Linear l;
  l.weight = Parameter(glorot_uniform({out, in}, in, out, rng));
  if (with_bias) l.bias = Parameter(Tensor({out}));
  return l;
}

Var Linear::apply(Graph& g, Var x) {
  if (bias.value.empty()) return ad::linear(x, g.param(weight));
  return ad::linear(x, g.param(weight), g.param(bias));
}

void Linear::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (!bias.value.empty()) fn(prefix + ".bias", bias);
}

FfnParams FfnParams::init(std::size_t in, std::size_t inner, std::size_t out, Rng& rng) {
  require_positive({in, inner, out}, "FfnParams::init");
  FfnParams p;
  p.weight1 = Parameter(glorot_uniform({inner, in}, in, inner, rng));
  p.bias1 = Parameter(Tensor({inner}));
  p.weight2 = Parameter(glorot_uniform({out, inner}, inner, out, rng));
  p.bias2 = Parameter(Tensor({out}));
  return p;
}

void FfnParams::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".weight1", weight1);
  fn(prefix + ".bias1", bias1);
  fn(prefix + ".weight2", weight2);
  fn(prefix + ".bias2", bias2);
}

Var ffn_apply(Graph& g, FfnParams& params, Var sequence) {
  const Tensor& x = sequence.value();
  if (x.cols() != params.in())
    throw ShapeError("ffn_apply: input width " + std::to_string(x.cols()) + " does not match FFN input " +
                     std::to_string(params.in()));
  Var hidden = ad::relu(ad::linear(sequence, g.param(params.weight1), g.param(params.bias1)));
  return ad::linear(hidden, g.param(params.weight2), g.param(params.bias2));
}

LstmParams LstmParams::init(std::size_t in, std::size_t hidden, Rng& rng) {
  require_positive({in, hidden}, "LstmParams::init");
  LstmParams p;
  p.input_weight = Parameter(glorot_uniform({4 * hidden, in}, in, hidden, rng));
  p.recurrent_weight = Parameter(glorot_uniform({4 * hidden, hidden}, hidden, hidden, rng));
  p.bias = Parameter(Tensor({4 * hidden}));
  return p;
}

void LstmParams::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".input_weight", input_weight);
  fn(prefix + ".recurrent_weight", recurrent_weight);
  fn(prefix + ".bias", bias);
}

BiLstmParams BiLstmParams::init(std::size_t in, std::size_t hidden, Rng& rng) {
  BiLstmParams p;
  p.forward = LstmParams::init(in, hidden, rng);
  p.backward = LstmParams::init(in, hidden, rng);
  return p;
}

void BiLstmParams::visit(const std::string& prefix, const ParameterVisitor& fn) {
  forward.visit(prefix + ".forward", fn);
  backward.visit(prefix + ".backward", fn);
}

Var bilstm_run(Graph& g, BiLstmParams& params, Var sequence) {
  const Tensor& x = sequence.value();
  if (x.rank() != 2 || x.shape()[0] == 0) throw DomainError("bilstm_run: sequence must have at least one row");
  if (x.cols() != params.in())
    throw ShapeError("bilstm_run: input width " + std::to_string(x.cols()) + " does not match LSTM input " +
                     std::to_string(params.in()));
  Var fwd_proj = ad::linear(sequence, g.param(params.forward.input_weight), g.param(params.forward.bias));
  Var bwd_proj = ad::linear(sequence, g.param(params.backward.input_weight), g.param(params.backward.bias));
  Var fwd = ad::lstm_sequence(fwd_proj, g.param(params.forward.recurrent_weight), false);
  Var bwd = ad::lstm_sequence(bwd_proj, g.param(params.backward.recurrent_weight), true);
  return ad::concat(fwd, bwd);
}

GruParams GruParams::init(std::size_t in, std::size_t hidden, Rng& rng) {
  require_positive({in, hidden}, "GruParams::init");
  GruParams p;
  p.input_weight = Parameter(glorot_uniform({3 * hidden, in}, in, hidden, rng));
  p.recurrent_weight = Parameter(glorot_uniform({3 * hidden, hidden}, hidden, hidden, rng));
  p.input_bias = Parameter(Tensor({3 * hidden}));
  p.recurrent_bias = Parameter(Tensor({3 * hidden}));
  return p;
}

void GruParams::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".input_weight", input_weight);
  fn(prefix + ".recurrent_weight", recurrent_weight);
  fn(prefix + ".input_bias", input_bias);
  fn(prefix + ".recurrent_bias", recurrent_bias);
}

Var gru_step(Graph& g, GruParams& params, Var input, Var h_prev) {
  const std::size_t h = params.hidden();
  if (input.value().rank() != 1 || input.value().size() != params.in())
    throw ShapeError("gru_step: input " + shape_string(input.value().shape()) + " does not match GRU input " +
                     std::to_string(params.in()));
  if (h_prev.value().rank() != 1 || h_prev.value().size() != h)
    throw ShapeError("gru_step: state " + shape_string(h_prev.value().shape()) + " does not match GRU hidden " +
                     std::to_string(h));
  Var x_part = ad::linear(input, g.param(params.input_weight), g.param(params.input_bias));
  Var h_part = ad::linear(h_prev, g.param(params.recurrent_weight), g.param(params.recurrent_bias));
  return ad::gru_cell(x_part, h_part, h_prev);
}

AttentionOutput dot_attention(Var query, Var memory, bool scaled) {
  const Tensor& q = query.value();
  const Tensor& m = memory.value();
  if (m.rank() != 2 || m.shape()[0] == 0) throw DomainError("dot_attention: memory is empty");
  if (q.rank() != 1 || q.size() != m.cols())
    throw ShapeError("dot_attention: query " + shape_string(q.shape()) + " does not match memory " +
                     shape_string(m.shape()));
  Var scores = ad::matmul_nt(query, memory);
  if (scaled) scores = ad::scale(scores, 1.0 / std::sqrt(static_cast<double>(q.size())));
  Var weights = ad::softmax(scores);
  return {weights, ad::weighted_sum(weights, memory)};
}

AttentionOutput dot_attention_rows(Var queries, Var keys, Var values, bool scaled) {
  const Tensor& q = queries.value();
  const Tensor& k = keys.value();
  if (k.rank() != 2 || k.shape()[0] == 0) throw DomainError("dot_attention_rows: no keys");
  if (q.rank() != 2 || q.cols() != k.cols())
    throw ShapeError("dot_attention_rows: queries " + shape_string(q.shape()) + " do not match keys " +
                     shape_string(k.shape()));
  if (values.value().rank() != 2 || values.value().shape()[0] != k.shape()[0])
    throw ShapeError("dot_attention_rows: values " + shape_string(values.value().shape()) + " do not match keys " +
                     shape_string(k.shape()));
  Var scores = ad::matmul_nt(queries, keys);
  if (scaled) scores = ad::scale(scores, 1.0 / std::sqrt(static_cast<double>(q.cols())));
  Var weights = ad::softmax(scores);
  return {weights, ad::matmul(weights, values)};
}

}  // namespace cmr::nn
