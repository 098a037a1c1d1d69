#pragma once

#include <cstddef>
#include <span>

#include "cmr/decoder.hpp"
#include "cmr/encoder.hpp"

namespace cmr::model {

/// Encoder and decoder parameters of one system variant.
struct Model {
  ModelDims dims;
  Variant variant = Variant::Cmr;
  EncoderParams encoder;
  DecoderParams decoder;

  static Model init(const ModelDims& dims, Variant variant, Rng& rng);
  // Decoder input table (the encoder table when embeddings are tied).
  Parameter& decoder_embeddings();
  // Names are prefixed "encoder." / "decoder.".
  void visit(const nn::ParameterVisitor& fn);
  std::size_t parameter_count();
};

/// Mean per-token teacher-forced NLL of one instance.
LossOutput instance_loss(Graph& g, Model& model, const EncoderInput& input, std::span<const int> response,
                         const text::ContextualVectorProvider& provider, DropoutSampler* dropout = nullptr,
                         double tau = 1.0);

Generation generate_response(Model& model, const EncoderInput& input, const text::ContextualVectorProvider& provider,
                             const GenerationConfig& config);

}  // namespace cmr::model
