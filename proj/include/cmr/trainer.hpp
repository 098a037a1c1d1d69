#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmr/corpus.hpp"
#include "cmr/model.hpp"

namespace cmr::train {

using model::Model;
using model::Variant;

enum class ClosenessMetric { Bleu2, NistLike };

ClosenessMetric parse_closeness(std::string_view name);  // "bleu-2" | "nist-like"
std::string closeness_name(ClosenessMetric metric);

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t batch_size = 32;
  double dropout = 0.4;
  std::size_t hidden_size = 512;
  std::size_t embedding_dim = 300;
  std::size_t ffn_inner = 0;  // 0: hidden_size
  std::size_t contextual_dim = 0;
  bool tie_embeddings = false;
  text::TruncationLimits limits;
  Variant variant = Variant::Cmr;
  ClosenessMetric closeness = ClosenessMetric::Bleu2;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // 0 disables gradient clipping
  std::size_t min_count = 1;
  double tau = 1.0;

  void validate() const;
  model::ModelDims dims(std::size_t vocab_size) const;
};

/// Key names match the JSON config file. Unknown keys raise ConfigError.
std::string config_to_json(const TrainConfig& config);
void apply_config_json(TrainConfig& config, std::string_view json_text);
// One "key=value" override, value parsed as JSON when possible.
void apply_config_override(TrainConfig& config, std::string_view assignment);

/// Document/response n-gram overlap, >= 0.
///   bleu-2:    sqrt(p1 * (m2 + 1) / (t2 + 1)), p1 clipped unigram precision,
///              m2/t2 clipped/total response bigrams; no brevity penalty.
///   nist-like: sum over n = 1..5 of the information of matched response
///              n-grams divided by the response n-gram count, information
///              estimated from the document's own n-gram counts.
double closeness_score(const text::Document& document, std::span<const std::string> response,
                       ClosenessMetric metric);

struct WeightedBatch {
  std::vector<const text::ConversationInstance*> instances;
  std::vector<double> closeness;
  std::vector<double> weights;
};

/// c_i / sum_j c_j, or uniform weights when every score is zero.
std::vector<double> normalize_weights(std::span<const double> closeness);
WeightedBatch weight_batch(std::span<const text::ConversationInstance* const> batch, ClosenessMetric metric);

/// Adam with the usual defaults; frozen embedding rows are left untouched.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(Model& model);
  std::uint64_t steps() const { return t_; }

  // Moment estimates by parameter name, for checkpoints.
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

void zero_gradients(Model& model);
// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradients(Model& model, double max_norm);

/// A model with its vocabulary, optimizer, and loop counters.
struct TrainingState {
  TrainConfig config;
  text::Vocabulary vocab;
  Model model;
  Adam optimizer{0.0005};
  Rng rng;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  double best_validation = -1.0;  // negative: none yet

  static TrainingState create(const TrainConfig& config, text::Vocabulary vocab);
};

/// Forward/backward over the batch and one optimizer step. cmr+w weights
/// instance losses by batch.weights, other variants take the mean. Throws
/// DomainError naming the instance if a loss is not finite.
double train_step(TrainingState& state, const WeightedBatch& batch,
                  const text::ContextualVectorProvider& provider = text::ContextualVectorProvider::disabled());

/// Batch loss without any parameter update or dropout.
double batch_loss(Model& model, const text::Vocabulary& vocab, const WeightedBatch& batch, bool weighted,
                  const text::ContextualVectorProvider& provider = text::ContextualVectorProvider::disabled());

/// Token-weighted mean NLL over a corpus, dropout off.
double corpus_nll(Model& model, const text::Vocabulary& vocab, std::span<const text::ConversationInstance> corpus,
                  const text::ContextualVectorProvider& provider = text::ContextualVectorProvider::disabled());

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainingOptions {
  std::filesystem::path output_dir;  // empty: keep everything in memory
  const text::ContextualVectorProvider* provider = nullptr;
  // Called after each epoch with the state; return false to stop early.
  std::function<bool(const TrainingState&)> on_epoch;
};

struct TrainingResult {
  std::vector<CurvePoint> curve;
  std::string best_checkpoint;  // serialized checkpoint with the lowest validation NLL
  std::string last_checkpoint;
};

/// Runs epochs config.epochs - state.epoch more epochs. Files written when
/// output_dir is set: checkpoint.json (best), last.json, loss.csv, config.json.
TrainingResult run_training(TrainingState& state, std::span<const text::ConversationInstance> train_set,
                            std::span<const text::ConversationInstance> validation_set,
                            const TrainingOptions& options = {});

// Checkpoint container (JSON): format tag, version, config, vocabulary,
// counters, RNG state, named parameter tensors, Adam moments, frozen rows.
std::string save_checkpoint(TrainingState& state);
TrainingState load_checkpoint(std::string_view json_text);
void write_checkpoint(const std::filesystem::path& path, TrainingState& state);
TrainingState read_checkpoint(const std::filesystem::path& path);

void write_loss_curve(const std::filesystem::path& path, std::span<const CurvePoint> curve);

}  // namespace cmr::train
