#include "cmr/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cmr/errors.hpp"
#include "json.hpp"

namespace cmr::train {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

template <class T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + value.dump());
  }
}

void apply_key(TrainConfig& c, const std::string& key, const json& v) {
  if (key == "learning_rate") c.learning_rate = get_as<double>(v, key);
  else if (key == "batch_size") c.batch_size = get_as<std::size_t>(v, key);
  else if (key == "dropout") c.dropout = get_as<double>(v, key);
  else if (key == "hidden_size") c.hidden_size = get_as<std::size_t>(v, key);
  else if (key == "embedding_dim") c.embedding_dim = get_as<std::size_t>(v, key);
  else if (key == "ffn_inner") c.ffn_inner = get_as<std::size_t>(v, key);
  else if (key == "contextual_dim") c.contextual_dim = get_as<std::size_t>(v, key);
  else if (key == "tie_embeddings") c.tie_embeddings = get_as<bool>(v, key);
  else if (key == "max_turn_length") c.limits.turn = get_as<std::size_t>(v, key);
  else if (key == "max_response_length") c.limits.response = get_as<std::size_t>(v, key);
  else if (key == "max_document_length") c.limits.document = get_as<std::size_t>(v, key);
  else if (key == "variant") c.variant = model::parse_variant(get_as<std::string>(v, key));
  else if (key == "closeness") c.closeness = parse_closeness(get_as<std::string>(v, key));
  else if (key == "epochs") c.epochs = get_as<std::size_t>(v, key);
  else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
  else if (key == "clip_norm") c.clip_norm = get_as<double>(v, key);
  else if (key == "min_count") c.min_count = get_as<std::size_t>(v, key);
  else if (key == "tau") c.tau = get_as<double>(v, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

ordered_json config_object(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["dropout"] = c.dropout;
  j["hidden_size"] = c.hidden_size;
  j["embedding_dim"] = c.embedding_dim;
  j["ffn_inner"] = c.ffn_inner;
  j["contextual_dim"] = c.contextual_dim;
  j["tie_embeddings"] = c.tie_embeddings;
  j["max_turn_length"] = c.limits.turn;
  j["max_response_length"] = c.limits.response;
  j["max_document_length"] = c.limits.document;
  j["variant"] = model::variant_name(c.variant);
  j["closeness"] = closeness_name(c.closeness);
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["clip_norm"] = c.clip_norm;
  j["min_count"] = c.min_count;
  j["tau"] = c.tau;
  return j;
}

std::vector<int> response_ids(const text::Vocabulary& vocab, const text::ConversationInstance& inst) {
  return vocab.encode(inst.response);
}

ordered_json tensor_json(const Tensor& t) {
  return ordered_json{{"shape", t.shape()}, {"data", t.storage()}};
}

Tensor tensor_from_json(const json& j, const std::string& name) {
  try {
    Tensor t(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
    return t;
  } catch (const json::exception& e) {
    throw ParseError(0, "checkpoint tensor '" + name + "': " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (hidden_size == 0 || hidden_size % 2) throw ConfigError("hidden_size must be positive and even");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (limits.turn == 0 || limits.response == 0 || limits.document == 0)
    throw ConfigError("truncation limits must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (min_count == 0) throw ConfigError("min_count must be at least 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

model::ModelDims TrainConfig::dims(std::size_t vocab_size) const {
  model::ModelDims d;
  d.vocab = vocab_size;
  d.embedding = embedding_dim;
  d.hidden = hidden_size;
  d.ffn_inner = ffn_inner;
  d.contextual = contextual_dim;
  d.tie_embeddings = tie_embeddings;
  return d;
}

std::string config_to_json(const TrainConfig& config) { return config_object(config).dump(2); }

void apply_config_json(TrainConfig& config, std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) apply_key(config, key, value);
}

void apply_config_override(TrainConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_key(config, key, value);
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(Model& model) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  const auto& frozen = model.encoder.embeddings.frozen;
  model.visit([&](const std::string& name, ad::Parameter& p) {
    auto [mi, fresh_m] = m_.try_emplace(name, Tensor::zeros_like(p.value));
    auto [vi, fresh_v] = v_.try_emplace(name, Tensor::zeros_like(p.value));
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    const bool embedding = name == "encoder.embeddings";
    const std::size_t cols = p.value.cols();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (embedding && frozen[i / cols]) continue;
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  });
}

void zero_gradients(Model& model) {
  model.visit([](const std::string&, ad::Parameter& p) { p.zero_grad(); });
}

double clip_gradients(Model& model, double max_norm) {
  double sq = 0.0;
  model.visit([&](const std::string&, ad::Parameter& p) {
    for (double g : p.grad.values()) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    model.visit([&](const std::string&, ad::Parameter& p) {
      for (double& g : p.grad.values()) g *= s;
    });
  }
  return norm;
}

TrainingState TrainingState::create(const TrainConfig& config, text::Vocabulary vocab) {
  config.validate();
  TrainingState s;
  s.config = config;
  s.vocab = std::move(vocab);
  s.rng = Rng(config.seed);
  s.model = Model::init(config.dims(s.vocab.size()), config.variant, s.rng);
  s.optimizer = Adam(config.learning_rate);
  return s;
}

namespace {

// Accumulates gradients of sum_i weight_i * loss_i; returns that sum.
double accumulate_batch(Model& model, const text::Vocabulary& vocab, const WeightedBatch& batch,
                        std::span<const double> weights, const text::ContextualVectorProvider& provider,
                        model::DropoutSampler* dropout, double tau, bool backward) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.instances.size(); ++i) {
    const auto& inst = *batch.instances[i];
    ad::Graph g;
    const auto input = model::make_encoder_input(inst, vocab, model.variant);
    const auto ids = response_ids(vocab, inst);
    const auto loss = model::instance_loss(g, model, input, ids, provider, dropout, tau);
    const double value = loss.loss.value()[0];
    if (!std::isfinite(value))
      throw DomainError("non-finite loss " + std::to_string(value) + " on instance '" + inst.id + "'");
    total += weights[i] * value;
    if (backward) g.backward(ad::scale(loss.loss, weights[i]));
  }
  return total;
}

std::vector<double> effective_weights(const WeightedBatch& batch, bool weighted) {
  if (weighted) return batch.weights;
  return std::vector<double>(batch.instances.size(), 1.0 / double(batch.instances.size()));
}

}  // namespace

double train_step(TrainingState& state, const WeightedBatch& batch, const text::ContextualVectorProvider& provider) {
  if (batch.instances.empty()) throw DomainError("train_step: empty batch");
  const bool weighted = state.config.variant == Variant::CmrW;
  const auto weights = effective_weights(batch, weighted);
  zero_gradients(state.model);
  model::DropoutSampler dropout(state.rng, state.config.dropout);
  const double loss = accumulate_batch(state.model, state.vocab, batch, weights, provider, &dropout,
                                       state.config.tau, true);
  if (state.config.clip_norm > 0.0) clip_gradients(state.model, state.config.clip_norm);
  state.optimizer.step(state.model);
  zero_gradients(state.model);
  ++state.step;
  return loss;
}

double batch_loss(Model& model, const text::Vocabulary& vocab, const WeightedBatch& batch, bool weighted,
                  const text::ContextualVectorProvider& provider) {
  const auto weights = effective_weights(batch, weighted);
  return accumulate_batch(model, vocab, batch, weights, provider, nullptr, 1.0, false);
}

double corpus_nll(Model& model, const text::Vocabulary& vocab, std::span<const text::ConversationInstance> corpus,
                  const text::ContextualVectorProvider& provider) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& inst : corpus) {
    ad::Graph g;
    const auto input = model::make_encoder_input(inst, vocab, model.variant);
    const auto loss = model::instance_loss(g, model, input, response_ids(vocab, inst), provider);
    for (double v : loss.token_losses) total += v;
    tokens += loss.token_losses.size();
  }
  return tokens ? total / double(tokens) : 0.0;
}

TrainingResult run_training(TrainingState& state, std::span<const text::ConversationInstance> train_set,
                            std::span<const text::ConversationInstance> validation_set,
                            const TrainingOptions& options) {
  if (train_set.empty()) throw DomainError("run_training: empty training set");
  const auto disabled = text::ContextualVectorProvider::disabled();
  const auto& provider = options.provider ? *options.provider : disabled;
  const bool persist = !options.output_dir.empty();
  if (persist) {
    std::filesystem::create_directories(options.output_dir);
    std::ofstream cfg(options.output_dir / "config.json");
    cfg << config_to_json(state.config) << '\n';
    if (!cfg) throw IoError("cannot write " + (options.output_dir / "config.json").string());
  }

  TrainingResult result;
  std::vector<std::size_t> order(train_set.size());
  while (state.epoch < state.config.epochs) {
    std::iota(order.begin(), order.end(), 0);
    state.rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += state.config.batch_size) {
      const std::size_t end = std::min(order.size(), start + state.config.batch_size);
      std::vector<const text::ConversationInstance*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(&train_set[order[i]]);
      const WeightedBatch batch = weight_batch(members, state.config.closeness);
      const double loss = train_step(state, batch, provider);
      result.curve.push_back({state.step, loss, std::nullopt});
    }
    ++state.epoch;
    const auto& eval_set = validation_set.empty() ? train_set : validation_set;
    const double val = corpus_nll(state.model, state.vocab, eval_set, provider);
    result.curve.back().val_loss = val;
    const bool improved = state.best_validation < 0.0 || val < state.best_validation;
    if (improved) state.best_validation = val;
    result.last_checkpoint = save_checkpoint(state);
    if (improved) result.best_checkpoint = result.last_checkpoint;
    if (persist) {
      auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(options.output_dir / name, std::ios::binary);
        out << text;
        if (!out) throw IoError("cannot write " + (options.output_dir / name).string());
      };
      write("last.json", result.last_checkpoint);
      if (improved) write("checkpoint.json", result.best_checkpoint);
      write_loss_curve(options.output_dir / "loss.csv", result.curve);
    }
    if (options.on_epoch && !options.on_epoch(state)) break;
  }
  if (result.last_checkpoint.empty()) result.last_checkpoint = save_checkpoint(state);
  if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  return result;
}

std::string save_checkpoint(TrainingState& state) {
  ordered_json j;
  j["format"] = "cmr-checkpoint";
  j["version"] = 1;
  j["config"] = config_object(state.config);
  j["vocabulary"] = state.vocab.tokens();
  j["epoch"] = state.epoch;
  j["step"] = state.step;
  j["best_validation"] = state.best_validation;
  j["rng"] = state.rng.state();
  ordered_json params = ordered_json::object();
  state.model.visit([&](const std::string& name, ad::Parameter& p) { params[name] = tensor_json(p.value); });
  j["parameters"] = std::move(params);
  std::vector<std::size_t> frozen;
  for (std::size_t i = 0; i < state.model.encoder.embeddings.frozen.size(); ++i)
    if (state.model.encoder.embeddings.frozen[i]) frozen.push_back(i);
  j["frozen_rows"] = frozen;
  ordered_json adam;
  adam["t"] = state.optimizer.steps();
  ordered_json m = ordered_json::object(), v = ordered_json::object();
  for (const auto& [name, t] : state.optimizer.first_moments()) m[name] = tensor_json(t);
  for (const auto& [name, t] : state.optimizer.second_moments()) v[name] = tensor_json(t);
  adam["m"] = std::move(m);
  adam["v"] = std::move(v);
  j["adam"] = std::move(adam);
  return j.dump();
}

TrainingState load_checkpoint(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "cmr-checkpoint") throw ParseError(0, "not a cmr checkpoint");
  if (j.value("version", 0) != 1) throw ParseError(0, "unsupported checkpoint version");
  try {
    TrainConfig config;
    apply_config_json(config, j.at("config").dump());
    TrainingState s;
    s.config = config;
    s.vocab = text::Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
    Rng init(config.seed);
    s.model = Model::init(config.dims(s.vocab.size()), config.variant, init);
    const json& params = j.at("parameters");
    s.model.visit([&](const std::string& name, ad::Parameter& p) {
      if (!params.contains(name)) throw ParseError(0, "checkpoint lacks parameter '" + name + "'");
      Tensor t = tensor_from_json(params.at(name), name);
      if (t.shape() != p.value.shape())
        throw ParseError(0, "parameter '" + name + "' has shape " + shape_string(t.shape()) + ", model expects " +
                                shape_string(p.value.shape()));
      p.value = std::move(t);
      p.grad = Tensor::zeros_like(p.value);
    });
    for (std::size_t row : j.at("frozen_rows").get<std::vector<std::size_t>>())
      s.model.encoder.embeddings.frozen.at(row) = true;
    s.optimizer = Adam(config.learning_rate);
    const json& adam = j.at("adam");
    s.optimizer.set_steps(adam.at("t").get<std::uint64_t>());
    for (const auto& [name, t] : adam.at("m").items()) s.optimizer.first_moments()[name] = tensor_from_json(t, name);
    for (const auto& [name, t] : adam.at("v").items()) s.optimizer.second_moments()[name] = tensor_from_json(t, name);
    s.epoch = j.at("epoch").get<std::size_t>();
    s.step = j.at("step").get<std::size_t>();
    s.best_validation = j.at("best_validation").get<double>();
    s.rng.set_state(j.at("rng").get<std::string>());
    return s;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, TrainingState& state) {
  std::ofstream out(path, std::ios::binary);
  out << save_checkpoint(state);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
}

TrainingState read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_checkpoint(ss.str());
}

void write_loss_curve(const std::filesystem::path& path, std::span<const CurvePoint> curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write loss curve " + path.string());
  out << "step,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& p : curve) {
    out << p.step << ',' << p.train_loss << ',';
    if (p.val_loss) out << *p.val_loss;
    out << '\n';
  }
  if (!out) throw IoError("write failure in " + path.string());
}

}  // namespace cmr::train
