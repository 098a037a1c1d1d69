#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cmr/embeddings.hpp"
#include "cmr/nn.hpp"
#include "cmr/text.hpp"

namespace cmr::model {

using ad::Graph;
using ad::Parameter;
using ad::Var;

enum class Variant { Seq2Seq, CmrF, Cmr, CmrW };

// Throws ConfigError for names other than seq2seq, cmr-f, cmr, cmr+w.
Variant parse_variant(std::string_view name);
std::string variant_name(Variant variant);
// True for the variants with the document reading component.
bool reads_document(Variant variant);

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embedding = text::kWordEmbeddingDim;
  std::size_t hidden = 512;  // d; must be even (two BiLSTM directions of d/2)
  std::size_t ffn_inner = 0;  // 0 means hidden
  std::size_t contextual = 0;  // 600 with pretrained contextual vectors
  bool tie_embeddings = false;

  std::size_t inner() const { return ffn_inner ? ffn_inner : hidden; }
  void validate() const;
};

/// Inverted dropout masks drawn from a caller-owned generator. A null
/// sampler or zero rate disables dropout.
class DropoutSampler {
 public:
  DropoutSampler(Rng& rng, double rate);
  Tensor mask(const Shape& shape);
  double rate() const { return rate_; }

 private:
  Rng* rng_;
  double rate_;
};

Var apply_dropout(Var x, DropoutSampler* dropout);

struct EncoderParams {
  Variant variant = Variant::Cmr;
  text::EmbeddingTable embeddings;  // [vocab x embedding], shared by both streams
  nn::FfnParams history_ffn;        // all variants except seq2seq
  nn::FfnParams document_ffn;       // document-reading variants only
  nn::BiLstmParams contextual;      // shared by history and document
  nn::Linear self_attention;        // [d x 4d]
  nn::BiLstmParams memory;          // [d -> d]
  Parameter pool_query;             // [d]

  static EncoderParams init(const ModelDims& dims, Variant variant, Rng& rng);
  void visit(const std::string& prefix, const nn::ParameterVisitor& fn);
};

/// Vocabulary ids of the two encoder streams.
struct EncoderInput {
  std::string id;
  std::vector<int> history;   // turns joined by <sep>
  std::vector<int> document;  // flat tokens; empty for variants that skip the document
};

/// Builds the encoder input. Document tokens are only read when the variant
/// reads documents; every read is counted by document_reads().
EncoderInput make_encoder_input(const text::ConversationInstance& instance, const text::Vocabulary& vocab,
                                Variant variant);
std::vector<int> encode_document(const text::Document& document, const text::Vocabulary& vocab);
std::size_t document_reads();
void reset_document_reads();

struct StreamPair {
  Var history;
  Var document;  // invalid when the document is skipped
};

/// Embedding lookup followed by each stream's FFN (seq2seq: embedding only).
StreamPair lexicon_encode(Graph& g, EncoderParams& params, const EncoderInput& input,
                          DropoutSampler* dropout = nullptr);

/// Concatenates pretrained contextual vectors (if enabled) and runs the shared
/// BiLSTM over each stream.
StreamPair contextual_encode(Graph& g, EncoderParams& params, const StreamPair& lexicon,
                             const text::ContextualVectorProvider& provider, const std::string& instance_id);

struct MemoryBlocks {
  Var memory;         // [n x d]
  Var cross_weights;  // [n x m]
  Var cross_context;  // [n x d], attention-weighted history per document row
  Var self_weights;   // [n x n]
};

/// Cross-attention of document rows over history rows, self-attention over
/// the fused rows, then the memory BiLSTM.
MemoryBlocks build_memory(Graph& g, EncoderParams& params, Var history_context, Var document_context);

struct Pooled {
  Var weights;  // [m]
  Var vector;   // [d]
};

Pooled pool_history(Graph& g, EncoderParams& params, Var history_context);

/// Everything the decoder reads.
struct EncoderMemory {
  Var memory;  // [n x d]; one zero row when the document is not read
  Var history_context;
  Var history_pooled;
  Var pool_weights;
  MemoryBlocks blocks;  // document-reading variants only
  std::size_t rows() const { return memory.value().shape()[0]; }
};

EncoderMemory encode(Graph& g, EncoderParams& params, const EncoderInput& input,
                     const text::ContextualVectorProvider& provider, DropoutSampler* dropout = nullptr);

}  // namespace cmr::model
