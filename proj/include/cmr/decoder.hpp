#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmr/encoder.hpp"

namespace cmr::model {

/// p(y_t) = softmax((W1 h_t + b) / tau),  h_t = W2 [z_t ; attend(z_t, M)],
/// z_t = GRU(e_{t-1}, h_{t-1}).
struct DecoderParams {
  Parameter output_embeddings;  // [vocab x embedding]; empty when tied to the encoder table
  nn::GruParams gru;            // embedding -> d
  Parameter mixer;              // W2 [d x 2d]
  nn::Linear output;            // W1 [vocab x d], b [vocab]
  Parameter init_projection;    // [d x d], pooled history -> h0

  static DecoderParams init(const ModelDims& dims, Rng& rng);
  bool tied() const { return output_embeddings.value.empty(); }
  void visit(const std::string& prefix, const nn::ParameterVisitor& fn);
};

struct DecoderState {
  Var h;
  Var z;  // invalid before the first step
  Var prev_embedding;
  int prev_token = text::Vocabulary::kBos;
  std::size_t step = 0;
};

struct GenerationConfig {
  double tau = 1.0;
  std::size_t k = 20;
  std::size_t max_length = 30;
  std::uint64_t seed = 1;

  void validate() const;
};

// `embeddings` is the decoder input table: params.output_embeddings, or the
// encoder table when tied.
DecoderState init_state(Graph& g, DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                        DropoutSampler* dropout = nullptr);

struct StepOutput {
  Var logits;         // [vocab], before temperature
  Var probabilities;  // softmax(logits / tau)
  Var attention;      // [n]
  DecoderState next;
};

StepOutput decode_step(Graph& g, DecoderParams& params, const DecoderState& state, const EncoderMemory& memory,
                       double tau = 1.0);

/// Feeds `token` as the next input embedding.
DecoderState advance(Graph& g, Parameter& embeddings, DecoderState state, int token, DropoutSampler* dropout = nullptr);

struct LossOutput {
  Var loss;                          // mean per-token NLL
  std::vector<double> token_losses;  // one per target, EOS last
};

/// Teacher forcing: inputs BOS y_1..y_T, targets y_1..y_T EOS.
LossOutput teacher_forced_loss(Graph& g, DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                               std::span<const int> response, double tau = 1.0, DropoutSampler* dropout = nullptr);

/// Keeps the k most probable ids (ties to the lower id), renormalizes and
/// samples. k beyond the vocabulary is clamped with a warning on stderr.
int top_k_sample(std::span<const double> probabilities, std::size_t k, Rng& rng);

struct Generation {
  std::vector<int> tokens;  // without EOS
  Tensor attention;         // [T x n], one row per emitted token
};

/// Reserved tokens other than EOS (padding, unknown, BOS, tags, turn
/// separator) are never emitted.
Generation generate(DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                    const GenerationConfig& config);

}  // namespace cmr::model
