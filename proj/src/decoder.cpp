#include "cmr/decoder.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "cmr/errors.hpp"

namespace cmr::model {

DecoderParams DecoderParams::init(const ModelDims& dims, Rng& rng) {
  dims.validate();
  const std::size_t d = dims.hidden;
  DecoderParams p;
  if (!dims.tie_embeddings)
    p.output_embeddings = Parameter(nn::glorot_uniform({dims.vocab, dims.embedding}, dims.vocab, dims.embedding, rng));
  p.gru = nn::GruParams::init(dims.embedding, d, rng);
  p.mixer = Parameter(nn::glorot_uniform({d, 2 * d}, 2 * d, d, rng));
  p.output = nn::Linear::init(d, dims.vocab, rng);
  p.init_projection = Parameter(nn::glorot_uniform({d, d}, d, d, rng));
  return p;
}

void DecoderParams::visit(const std::string& prefix, const nn::ParameterVisitor& fn) {
  if (!tied()) fn(prefix + "output_embeddings", output_embeddings);
  gru.visit(prefix + "gru", fn);
  fn(prefix + "mixer", mixer);
  output.visit(prefix + "output", fn);
  fn(prefix + "init_projection", init_projection);
}

void GenerationConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive, got " + std::to_string(tau));
  if (k < 1) throw ConfigError("top-k must be at least 1");
  if (max_length < 1) throw ConfigError("max length must be at least 1");
}

DecoderState init_state(Graph& g, DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                        DropoutSampler* dropout) {
  DecoderState s;
  s.h = ad::matmul(g.param(params.init_projection), memory.history_pooled);
  return advance(g, embeddings, std::move(s), text::Vocabulary::kBos, dropout);
}

DecoderState advance(Graph& g, Parameter& embeddings, DecoderState state, int token, DropoutSampler* dropout) {
  const int ids[1] = {token};
  Var e = ad::embedding(g.param(embeddings), ids);  // [1 x emb]
  state.prev_embedding = apply_dropout(ad::row(e, 0), dropout);
  state.prev_token = token;
  return state;
}

StepOutput decode_step(Graph& g, DecoderParams& params, const DecoderState& state, const EncoderMemory& memory,
                       double tau) {
  if (state.h.value().size() != params.gru.hidden())
    throw ShapeError("decode_step: state width " + std::to_string(state.h.value().size()) +
                     " does not match decoder width " + std::to_string(params.gru.hidden()));
  if (memory.memory.value().cols() != params.gru.hidden())
    throw ShapeError("decode_step: memory width " + std::to_string(memory.memory.value().cols()) +
                     " does not match decoder width " + std::to_string(params.gru.hidden()));
  StepOutput out;
  Var z = nn::gru_step(g, params.gru, state.prev_embedding, state.h);
  auto att = nn::dot_attention(z, memory.memory);
  Var h = ad::matmul(g.param(params.mixer), ad::concat(z, att.context));
  out.logits = params.output.apply(g, h);
  out.probabilities = ad::softmax(out.logits, tau);
  out.attention = att.weights;
  out.next = state;
  out.next.h = h;
  out.next.z = z;
  out.next.step = state.step + 1;
  return out;
}

LossOutput teacher_forced_loss(Graph& g, DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                               std::span<const int> response, double tau, DropoutSampler* dropout) {
  if (response.empty()) throw DomainError("teacher_forced_loss: empty gold response");
  DecoderState state = init_state(g, params, embeddings, memory, dropout);
  std::vector<int> targets(response.begin(), response.end());
  targets.push_back(text::Vocabulary::kEos);

  // The state recursion is sequential; the output projection is batched.
  Var mixer = g.param(params.mixer);
  std::vector<Var> states;
  states.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    Var z = nn::gru_step(g, params.gru, state.prev_embedding, state.h);
    auto att = nn::dot_attention(z, memory.memory);
    state.h = ad::matmul(mixer, ad::concat(z, att.context));
    states.push_back(state.h);
    if (t + 1 < targets.size()) state = advance(g, embeddings, std::move(state), targets[t], dropout);
  }
  Var logits = params.output.apply(g, ad::stack_rows(states));
  Var per_token = ad::cross_entropy(logits, targets, tau);
  LossOutput out;
  out.loss = ad::mean(per_token);
  const auto losses = per_token.value().values();
  out.token_losses.assign(losses.begin(), losses.end());
  return out;
}

int top_k_sample(std::span<const double> probabilities, std::size_t k, Rng& rng) {
  if (probabilities.empty()) throw DomainError("top_k_sample: empty distribution");
  if (k == 0) throw DomainError("top_k_sample: k must be at least 1");
  if (k > probabilities.size()) {
    std::cerr << "warning: top-k " << k << " exceeds vocabulary size " << probabilities.size() << ", clamping\n";
    k = probabilities.size();
  }
  std::vector<int> ids(probabilities.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](int a, int b) {
    const double pa = probabilities[static_cast<std::size_t>(a)], pb = probabilities[static_cast<std::size_t>(b)];
    return pa > pb || (pa == pb && a < b);
  });
  if (k == 1) return ids[0];
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += probabilities[static_cast<std::size_t>(ids[i])];
  if (!(total > 0.0)) return ids[0];
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < k; ++i) {
    u -= probabilities[static_cast<std::size_t>(ids[i])];
    if (u < 0.0) return ids[i];
  }
  return ids[k - 1];
}

Generation generate(DecoderParams& params, Parameter& embeddings, const EncoderMemory& memory,
                    const GenerationConfig& config) {
  config.validate();
  Graph& g = memory.memory.graph();
  Rng rng(config.seed);
  const std::size_t reserved = text::Vocabulary::reserved_tokens().size();
  DecoderState state = init_state(g, params, embeddings, memory);
  Generation out;
  std::vector<Tensor> rows;
  while (out.tokens.size() < config.max_length) {
    StepOutput step = decode_step(g, params, state, memory, config.tau);
    std::vector<double> probs(step.probabilities.value().values().begin(), step.probabilities.value().values().end());
    for (std::size_t id = 0; id < reserved && id < probs.size(); ++id)
      if (id != std::size_t(text::Vocabulary::kEos)) probs[id] = 0.0;
    const int token = top_k_sample(probs, config.k, rng);
    if (token == text::Vocabulary::kEos) break;
    out.tokens.push_back(token);
    rows.push_back(step.attention.value());
    state = advance(g, embeddings, step.next, token);
  }
  out.attention = Tensor({rows.size(), memory.rows()});
  for (std::size_t t = 0; t < rows.size(); ++t)
    std::copy(rows[t].values().begin(), rows[t].values().end(), out.attention.row(t).begin());
  return out;
}

}  // namespace cmr::model
