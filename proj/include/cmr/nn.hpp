#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "cmr/autodiff.hpp"
#include "cmr/random.hpp"

namespace cmr::nn {

using ad::Graph;
using ad::Parameter;
using ad::Var;

// Callback used to enumerate named parameters (checkpointing, optimizers).
using ParameterVisitor = std::function<void(const std::string& name, Parameter& parameter)>;

/// Glorot-uniform: U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Affine map y = x W^T + b with W of shape [out x in].
struct Linear {
  Parameter weight;
  Parameter bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Var apply(Graph& g, Var x);
  std::size_t in() const { return weight.value.shape()[1]; }
  std::size_t out() const { return weight.value.shape()[0]; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

/// Two affine layers with a ReLU in between, applied independently at
/// every row of a sequence.
struct FfnParams {
  Parameter weight1;  // [inner x in]
  Parameter bias1;    // [inner]
  Parameter weight2;  // [out x inner]
  Parameter bias2;    // [out]

  static FfnParams init(std::size_t in, std::size_t inner, std::size_t out, Rng& rng);
  std::size_t in() const { return weight1.value.shape()[1]; }
  std::size_t out() const { return weight2.value.shape()[0]; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

Var ffn_apply(Graph& g, FfnParams& params, Var sequence);

/// One LSTM direction. Gate blocks are stacked in the order input, forget,
/// cell candidate, output.
struct LstmParams {
  Parameter input_weight;      // [4h x in]
  Parameter recurrent_weight;  // [4h x h]
  Parameter bias;              // [4h]

  static LstmParams init(std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t in() const { return input_weight.value.shape()[1]; }
  std::size_t hidden() const { return recurrent_weight.value.shape()[1]; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  static BiLstmParams init(std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t in() const { return forward.in(); }
  std::size_t hidden() const { return forward.hidden(); }
  std::size_t out() const { return 2 * forward.hidden(); }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

/// [len x d] -> [len x 2h]; row t is concat(forward state t, backward state t).
Var bilstm_run(Graph& g, BiLstmParams& params, Var sequence);

/// GRU with gate blocks stacked as update (z), reset (r), candidate (n):
///   z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + bn + r * (Un h + cn)),  h' = (1 - z) * h + z * n
struct GruParams {
  Parameter input_weight;      // [3h x in]
  Parameter recurrent_weight;  // [3h x h]
  Parameter input_bias;        // [3h]
  Parameter recurrent_bias;    // [3h]

  static GruParams init(std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t in() const { return input_weight.value.shape()[1]; }
  std::size_t hidden() const { return recurrent_weight.value.shape()[1]; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

Var gru_step(Graph& g, GruParams& params, Var input, Var h_prev);

struct AttentionOutput {
  Var weights;  // probability vector over memory rows
  Var context;  // weights^T memory
};

/// weights = softmax(memory . query), context = weights^T memory. Scores are
/// raw dot products unless scaled is set, which divides them by sqrt(d).
AttentionOutput dot_attention(Var query, Var memory, bool scaled = false);

/// Row-wise attention of every query row over all key rows; returns the
/// [q x k] weight matrix and the [q x d] weighted averages of the values.
AttentionOutput dot_attention_rows(Var queries, Var keys, Var values, bool scaled = false);

}  // namespace cmr::nn
