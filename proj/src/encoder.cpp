#include "cmr/encoder.hpp"

#include <atomic>

#include "cmr/errors.hpp"

namespace cmr::model {

namespace {

std::atomic<std::size_t> g_document_reads{0};


}  // namespace

Variant parse_variant(std::string_view name) {
  if (name == "seq2seq") return Variant::Seq2Seq;
  if (name == "cmr-f") return Variant::CmrF;
  if (name == "cmr") return Variant::Cmr;
  if (name == "cmr+w") return Variant::CmrW;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected seq2seq, cmr-f, cmr or cmr+w)");
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::Seq2Seq: return "seq2seq";
    case Variant::CmrF: return "cmr-f";
    case Variant::Cmr: return "cmr";
    case Variant::CmrW: return "cmr+w";
  }
  return "?";
}

bool reads_document(Variant variant) { return variant == Variant::Cmr || variant == Variant::CmrW; }

void ModelDims::validate() const {
  if (vocab == 0 || embedding == 0 || hidden == 0) throw ConfigError("model dimensions must be positive");
  if (hidden % 2 != 0) throw ConfigError("hidden size must be even, got " + std::to_string(hidden));
}

DropoutSampler::DropoutSampler(Rng& rng, double rate) : rng_(&rng), rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout rate must lie in [0,1), got " + std::to_string(rate));
}

Tensor DropoutSampler::mask(const Shape& shape) {
  Tensor m(shape);
  const double keep = 1.0 - rate_;
  for (double& v : m.values()) v = rng_->uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

Var apply_dropout(Var x, DropoutSampler* dropout) {
  if (!dropout || dropout->rate() == 0.0) return x;
  return ad::dropout(x, dropout->mask(x.shape()));
}

EncoderParams EncoderParams::init(const ModelDims& dims, Variant variant, Rng& rng) {
  dims.validate();
  const std::size_t d = dims.hidden;
  EncoderParams p;
  p.variant = variant;
  p.embeddings = text::EmbeddingTable::init(dims.vocab, dims.embedding, rng);
  std::size_t lexicon_width = dims.embedding;
  if (variant != Variant::Seq2Seq) {
    p.history_ffn = nn::FfnParams::init(dims.embedding, dims.inner(), d, rng);
    lexicon_width = d;
  }
  if (reads_document(variant)) p.document_ffn = nn::FfnParams::init(dims.embedding, dims.inner(), d, rng);
  p.contextual = nn::BiLstmParams::init(lexicon_width + dims.contextual, d / 2, rng);
  if (reads_document(variant)) {
    p.self_attention = nn::Linear::init(4 * d, d, rng);
    p.memory = nn::BiLstmParams::init(d, d / 2, rng);
  }
  p.pool_query = Parameter(nn::glorot_uniform({d}, d, 1, rng));
  return p;
}

void EncoderParams::visit(const std::string& prefix, const nn::ParameterVisitor& fn) {
  fn(prefix + "embeddings", embeddings.matrix);
  if (variant != Variant::Seq2Seq) history_ffn.visit(prefix + "history_ffn", fn);
  if (reads_document(variant)) document_ffn.visit(prefix + "document_ffn", fn);
  contextual.visit(prefix + "contextual", fn);
  if (reads_document(variant)) {
    self_attention.visit(prefix + "self_attention", fn);
    memory.visit(prefix + "memory", fn);
  }
  fn(prefix + "pool_query", pool_query);
}

std::vector<int> encode_document(const text::Document& document, const text::Vocabulary& vocab) {
  g_document_reads.fetch_add(1, std::memory_order_relaxed);
  return vocab.encode(document.flat_tokens());
}

std::size_t document_reads() { return g_document_reads.load(); }
void reset_document_reads() { g_document_reads.store(0); }

EncoderInput make_encoder_input(const text::ConversationInstance& instance, const text::Vocabulary& vocab,
                                Variant variant) {
  EncoderInput input;
  input.id = instance.id;
  input.history = vocab.encode(instance.history_tokens());
  if (reads_document(variant)) input.document = encode_document(instance.document, vocab);
  return input;
}

StreamPair lexicon_encode(Graph& g, EncoderParams& params, const EncoderInput& input, DropoutSampler* dropout) {
  if (input.history.empty()) throw DomainError("lexicon_encode: empty history for instance '" + input.id + "'");
  Var table = g.param(params.embeddings.matrix);
  StreamPair out;
  Var history = apply_dropout(ad::embedding(table, input.history), dropout);
  out.history = params.variant == Variant::Seq2Seq ? history : nn::ffn_apply(g, params.history_ffn, history);
  if (reads_document(params.variant)) {
    if (input.document.empty()) throw DomainError("lexicon_encode: empty document for instance '" + input.id + "'");
    Var document = apply_dropout(ad::embedding(table, input.document), dropout);
    out.document = nn::ffn_apply(g, params.document_ffn, document);
  }
  return out;
}

StreamPair contextual_encode(Graph& g, EncoderParams& params, const StreamPair& lexicon,
                             const text::ContextualVectorProvider& provider, const std::string& instance_id) {
  auto run = [&](Var reps, text::Stream stream) {
    if (provider.enabled()) {
      const std::size_t len = reps.value().rows();
      reps = ad::concat(reps, g.constant(provider.vectors(instance_id, stream, len)));
    }
    if (reps.value().cols() != params.contextual.in())
      throw DomainError("contextual_encode: input width " + std::to_string(reps.value().cols()) +
                        " does not match the BiLSTM input " + std::to_string(params.contextual.in()) +
                        " (contextual vector dimension mismatch?)");
    return nn::bilstm_run(g, params.contextual, reps);
  };
  StreamPair out;
  out.history = run(lexicon.history, text::Stream::History);
  if (lexicon.document.valid()) out.document = run(lexicon.document, text::Stream::Document);
  return out;
}

MemoryBlocks build_memory(Graph& g, EncoderParams& params, Var history_context, Var document_context) {
  if (!document_context.valid() || document_context.value().rank() != 2 || document_context.value().rows() == 0)
    throw DomainError("build_memory: empty document");
  if (history_context.value().rank() != 2 || history_context.value().rows() == 0)
    throw DomainError("build_memory: empty history");
  MemoryBlocks out;
  auto cross = nn::dot_attention_rows(document_context, history_context, history_context);
  out.cross_weights = cross.weights;
  out.cross_context = cross.context;
  Var fused = ad::concat(document_context, cross.context);
  auto self = nn::dot_attention_rows(fused, fused, fused);
  out.self_weights = self.weights;
  Var attended = params.self_attention.apply(g, ad::concat(fused, self.context));
  out.memory = nn::bilstm_run(g, params.memory, attended);
  return out;
}

Pooled pool_history(Graph& g, EncoderParams& params, Var history_context) {
  if (history_context.value().rank() != 2 || history_context.value().rows() == 0)
    throw DomainError("pool_history: empty history");
  auto att = nn::dot_attention(g.param(params.pool_query), history_context);
  return {att.weights, att.context};
}

EncoderMemory encode(Graph& g, EncoderParams& params, const EncoderInput& input,
                     const text::ContextualVectorProvider& provider, DropoutSampler* dropout) {
  const StreamPair lexicon = lexicon_encode(g, params, input, dropout);
  const StreamPair context = contextual_encode(g, params, lexicon, provider, input.id);
  EncoderMemory out;
  out.history_context = context.history;
  const Pooled pooled = pool_history(g, params, context.history);
  out.history_pooled = pooled.vector;
  out.pool_weights = pooled.weights;
  switch (params.variant) {
    case Variant::Seq2Seq:
      out.memory = context.history;
      break;
    case Variant::CmrF:
      out.memory = g.constant(Tensor({1, params.pool_query.size()}));
      break;
    case Variant::Cmr:
    case Variant::CmrW:
      out.blocks = build_memory(g, params, context.history, context.document);
      out.memory = out.blocks.memory;
      break;
  }
  return out;
}

}  // namespace cmr::model
