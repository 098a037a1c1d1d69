#include "cmr/model.hpp"

namespace cmr::model {

Model Model::init(const ModelDims& dims, Variant variant, Rng& rng) {
  Model m;
  m.dims = dims;
  m.variant = variant;
  m.encoder = EncoderParams::init(dims, variant, rng);
  m.decoder = DecoderParams::init(dims, rng);
  return m;
}

Parameter& Model::decoder_embeddings() {
  return decoder.tied() ? encoder.embeddings.matrix : decoder.output_embeddings;
}

void Model::visit(const nn::ParameterVisitor& fn) {
  encoder.visit("encoder.", fn);
  decoder.visit("decoder.", fn);
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Parameter& p) { n += p.size(); });
  return n;
}

LossOutput instance_loss(Graph& g, Model& model, const EncoderInput& input, std::span<const int> response,
                         const text::ContextualVectorProvider& provider, DropoutSampler* dropout, double tau) {
  const EncoderMemory memory = encode(g, model.encoder, input, provider, dropout);
  return teacher_forced_loss(g, model.decoder, model.decoder_embeddings(), memory, response, tau, dropout);
}

Generation generate_response(Model& model, const EncoderInput& input, const text::ContextualVectorProvider& provider,
                             const GenerationConfig& config) {
  Graph g;
  const EncoderMemory memory = encode(g, model.encoder, input, provider);
  return generate(model.decoder, model.decoder_embeddings(), memory, config);
}

}  // namespace cmr::model
