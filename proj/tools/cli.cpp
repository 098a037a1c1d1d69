#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cmr/corpus.hpp"
#include "cmr/embeddings.hpp"
#include "cmr/errors.hpp"
#include "cmr/metrics.hpp"
#include "cmr/synthetic.hpp"
#include "cmr/trainer.hpp"
#include "json.hpp"

namespace cmr::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? env : "cmr-out";
}

ordered_json stats_json(const text::CorpusStats& s) {
  ordered_json j;
  j["# dialogues"] = s.dialogues;
  j["# utterances"] = s.utterances;
  j["# documents"] = s.documents;
  j["# document sentences"] = s.document_sentences;
  j["Average length (# words)"] = {{"utterances", s.average_utterance_length},
                                   {"document sentences", s.average_document_sentence_length}};
  return j;
}

// Options shared by subcommands that build a TrainConfig.
struct ConfigLayers {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<std::size_t> epochs;

  // defaults < config file < command line
  train::TrainConfig resolve() const {
    train::TrainConfig c;
    if (!config_file.empty()) train::apply_config_json(c, read_file(config_file));
    for (const auto& o : overrides) train::apply_config_override(c, o);
    if (variant) c.variant = model::parse_variant(*variant);
    if (seed) c.seed = *seed;
    if (tau) c.tau = *tau;
    if (epochs) c.epochs = *epochs;
    c.validate();
    return c;
  }
};

void add_config_options(CLI::App* cmd, ConfigLayers& layers, bool training) {
  cmd->add_option("--config", layers.config_file, "JSON config file (keys as in config.json)");
  cmd->add_option("--set", layers.overrides, "config override key=value, repeatable");
  cmd->add_option("--seed", layers.seed, "random seed");
  if (training) {
    cmd->add_option("--variant", layers.variant, "seq2seq | cmr-f | cmr | cmr+w");
    cmd->add_option("--epochs", layers.epochs, "number of epochs");
  }
}

// ---------------------------------------------------------------- synthetic

struct SyntheticArgs {
  text::SyntheticConfig config;
  std::string out = "synthetic.jsonl";
};

int cmd_synthetic(const SyntheticArgs& a, const fs::path& dir, std::ostream& err) {
  fs::create_directories(dir);
  const auto corpus = text::generate_synthetic_corpus(a.config);
  const fs::path path = dir / a.out;
  text::write_corpus(path, corpus);
  err << "cmr: wrote " << corpus.size() << " instances to " << path.string() << '\n';
  return 0;
}

// --------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string input;
  double valid_fraction = 0.0;
  double test_fraction = 0.0;
  bool multi_reference = false;
  std::size_t min_turn_length = 1;
  bool keep_redacted = false;
  bool keep_quotes = false;
};

int cmd_preprocess(const PreprocessArgs& a, const ConfigLayers& layers, const fs::path& dir, std::ostream& err) {
  const auto config = layers.resolve();
  if (a.valid_fraction < 0 || a.test_fraction < 0 || a.valid_fraction + a.test_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  text::LoadOptions load;
  load.limits = config.limits;
  load.min_turn_length = a.min_turn_length;
  load.drop_redacted = !a.keep_redacted;
  load.drop_quotes = !a.keep_quotes;
  text::LoadStats load_stats;
  const auto all = text::load_corpus(a.input, load, &load_stats);

  // split by (history, document) group so that no context crosses splits
  std::map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::string key;
    for (const auto& t : all[i].history) key += text::join(t) + '\x1f';
    key += '\x1e' + text::join(all[i].document.flat_tokens());
    auto [it, fresh] = group_of.try_emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(a.test_fraction * double(groups.size()) + 0.5);
  const auto n_valid = static_cast<std::size_t>(a.valid_fraction * double(groups.size()) + 0.5);
  std::vector<int> split_of(groups.size(), 0);  // 0 train, 1 valid, 2 test
  for (std::size_t r = 0; r < order.size(); ++r)
    split_of[order[r]] = r < n_test ? 2 : r < n_test + std::min(n_valid, groups.size() - n_test) ? 1 : 0;
  std::vector<text::ConversationInstance> train, valid, test;
  std::vector<int> instance_split(all.size(), 0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (auto i : groups[gi]) instance_split[i] = split_of[gi];
  for (std::size_t i = 0; i < all.size(); ++i)
    (instance_split[i] == 0 ? train : instance_split[i] == 1 ? valid : test).push_back(all[i]);

  fs::create_directories(dir);
  text::write_corpus(dir / "train.jsonl", train);
  text::write_corpus(dir / "valid.jsonl", valid);
  ordered_json stats;
  stats["input"] = {{"records", load_stats.records},
                    {"kept", load_stats.kept},
                    {"dropped_short", load_stats.dropped_short},
                    {"dropped_redacted", load_stats.dropped_redacted},
                    {"dropped_quotes", load_stats.dropped_quotes}};
  stats["train"] = stats_json(text::compute_stats(train));
  stats["valid"] = stats_json(text::compute_stats(valid));
  if (a.multi_reference) {
    const auto multi = text::make_multi_reference_testset(test);
    text::write_corpus(dir / "test.jsonl", multi.eval_set);
    std::vector<eval::SystemOutput> human;
    for (const auto& h : multi.human) human.push_back({h.id, h.response});
    eval::write_outputs((dir / "human.txt").string(), human);
    stats["test"] = stats_json(text::compute_stats(multi.eval_set));
    stats["test"]["dropped_groups"] = multi.dropped_groups;
  } else {
    text::write_corpus(dir / "test.jsonl", test);
    stats["test"] = stats_json(text::compute_stats(test));
  }
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  err << "cmr: " << load_stats.kept << " of " << load_stats.records << " records kept; train " << train.size()
      << ", valid " << valid.size() << ", test " << test.size() << '\n';
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string train;
  std::string valid;
  std::string embeddings;
  bool freeze_embeddings = false;
  std::string contextual;
  std::string resume;
};

int cmd_train(const TrainArgs& a, const ConfigLayers& layers, const fs::path& dir, std::ostream& err) {
  text::LoadOptions load;
  std::optional<train::TrainingState> state;
  if (!a.resume.empty()) {
    state = train::read_checkpoint(a.resume);
    // command-line epochs extend a resumed run
    if (layers.epochs) state->config.epochs = *layers.epochs;
    err << "cmr: resuming at epoch " << state->epoch << ", step " << state->step << '\n';
  } else {
    const auto config = layers.resolve();
    load.limits = config.limits;
    const auto corpus = text::load_corpus(a.train, load);
    state = train::TrainingState::create(config, text::build_vocabulary(corpus, config.min_count));
    if (!a.embeddings.empty()) {
      const auto n = state->model.encoder.embeddings.load(a.embeddings, state->vocab, a.freeze_embeddings);
      err << "cmr: loaded " << n << " pretrained vectors\n";
    }
  }
  load.limits = state->config.limits;
  const auto train_set = text::load_corpus(a.train, load);
  const auto valid_set = a.valid.empty() ? std::vector<text::ConversationInstance>{} : text::load_corpus(a.valid, load);
  const auto provider = a.contextual.empty() ? text::ContextualVectorProvider::disabled()
                                             : text::ContextualVectorProvider::from_file(a.contextual);
  if (provider.dimension() != state->config.contextual_dim)
    throw ConfigError("contextual_dim is " + std::to_string(state->config.contextual_dim) +
                      " but the contextual vectors have dimension " + std::to_string(provider.dimension()));

  err << "cmr: training " << model::variant_name(state->config.variant) << " on " << train_set.size()
      << " instances, vocabulary " << state->vocab.size() << ", " << state->model.parameter_count()
      << " parameters\n";
  train::TrainingOptions opts;
  opts.output_dir = dir;
  opts.provider = &provider;
  opts.on_epoch = [&](const train::TrainingState& s) {
    err << "cmr: epoch " << s.epoch << ", best validation nll " << s.best_validation << '\n';
    return true;
  };
  train::run_training(*state, train_set, valid_set, opts);
  err << "cmr: wrote " << (dir / "checkpoint.json").string() << '\n';
  return 0;
}

// ----------------------------------------------------------------- generate

struct GenerateArgs {
  std::string checkpoint;
  std::string input;
  std::string vocab;
  std::string contextual;
  std::optional<double> tau;
  std::size_t top_k = 20;
  std::size_t max_length = 30;
  std::uint64_t seed = 1;
  bool dump_attention = false;
  bool interactive = false;
  std::string out = "outputs.txt";
};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

// Rows: generated tokens, columns: memory positions. Darker blue means more
// attention mass.
std::string attention_svg(const text::Tokens& rows, const text::Tokens& cols, const Tensor& attention) {
  constexpr int cell = 14, left = 110, top = 90;
  const int width = left + cell * int(cols.size()) + 10;
  const int height = top + cell * int(rows.size()) + 10;
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"monospace\" font-size=\"10\">\n";
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const int x = left + int(c) * cell + cell / 2;
    s << "<text transform=\"translate(" << x << "," << top - 4 << ") rotate(-60)\">" << svg_escape(cols[c])
      << "</text>\n";
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = top + int(r) * cell;
    s << "<text x=\"" << left - 4 << "\" y=\"" << y + cell - 3 << "\" text-anchor=\"end\">" << svg_escape(rows[r])
      << "</text>\n";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double p = attention(r, c);
      s << "<rect x=\"" << left + int(c) * cell << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"#08306b\" fill-opacity=\"" << p << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

text::Tokens memory_labels(const text::ConversationInstance& inst, model::Variant v) {
  if (v == model::Variant::CmrF) return {"<none>"};
  if (v == model::Variant::Seq2Seq) return inst.history_tokens();
  return inst.document.flat_tokens();
}

int cmd_generate(const GenerateArgs& a, const fs::path& dir, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  auto state = train::read_checkpoint(a.checkpoint);
  model::GenerationConfig gen;
  gen.tau = a.tau.value_or(state.config.tau);
  gen.k = a.top_k;
  gen.max_length = a.max_length;
  gen.validate();
  if (!a.vocab.empty()) {
    std::vector<std::string> tokens;
    std::istringstream lines(read_file(a.vocab));
    for (std::string line; std::getline(lines, line);)
      if (!line.empty()) tokens.push_back(line);
    if (tokens != state.vocab.tokens())
      throw DomainError("vocabulary mismatch: " + a.vocab + " differs from the checkpoint vocabulary");
  }
  const auto provider = a.contextual.empty() ? text::ContextualVectorProvider::disabled()
                                             : text::ContextualVectorProvider::from_file(a.contextual);
  text::LoadOptions load;
  load.limits = state.config.limits;

  std::vector<text::ConversationInstance> instances;
  if (a.interactive) {
    std::string line;
    while (line.empty() && std::getline(in, line)) {
    }
    auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) throw ParseError(1, "interactive input is not a JSON object");
    if (!record.contains("id")) record["id"] = "interactive";
    if (!record.contains("response")) record["response"] = "?";
    load.drop_quotes = load.drop_redacted = false;
    auto inst = text::parse_record(record.dump(), 1, load);
    if (!inst) throw ParseError(1, "interactive record rejected by the input filters");
    instances.push_back(*inst);
  } else {
    instances = text::load_corpus(a.input, load);
  }

  std::size_t known = 0, total = 0;
  for (const auto& inst : instances)
    for (const auto& t : inst.history_tokens()) {
      ++total;
      if (state.vocab.find(t)) ++known;
    }
  if (total > 0 && known == 0)
    throw DomainError("vocabulary mismatch: no history token of the input is in the checkpoint vocabulary");

  std::vector<eval::SystemOutput> outputs;
  if (a.dump_attention && !a.interactive) fs::create_directories(dir / "attention");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    gen.seed = a.seed + i;
    const auto input = model::make_encoder_input(inst, state.vocab, state.model.variant);
    const auto result = model::generate_response(state.model, input, provider, gen);
    const auto tokens = state.vocab.decode(result.tokens);
    outputs.push_back({inst.id, tokens});
    if (a.dump_attention && !a.interactive) {
      const auto labels = memory_labels(inst, state.model.variant);
      ordered_json j;
      j["id"] = inst.id;
      j["variant"] = model::variant_name(state.model.variant);
      j["response"] = tokens;
      j["memory"] = labels;
      ordered_json rows = ordered_json::array();
      for (std::size_t r = 0; r < result.attention.rows(); ++r) {
        const auto row = result.attention.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      j["attention"] = std::move(rows);
      write_file(dir / "attention" / (inst.id + ".json"), j.dump(2) + "\n");
      write_file(dir / "attention" / (inst.id + ".svg"), attention_svg(tokens, labels, result.attention));
    }
  }
  if (a.interactive) {
    out << text::join(outputs.front().tokens) << '\n';
    return 0;
  }
  fs::create_directories(dir);
  eval::write_outputs((dir / a.out).string(), outputs);
  err << "cmr: wrote " << outputs.size() << " responses to " << (dir / a.out).string() << '\n';
  return 0;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string outputs;
  std::string test;
  std::string stopwords;
  std::string compare;
  std::size_t bootstrap = 0;
  std::vector<std::string> metrics;
  std::uint64_t seed = 1;
  std::string out = "report.json";
};

int cmd_evaluate(const EvaluateArgs& a, const fs::path& dir, std::ostream& err) {
  text::LoadOptions load;
  // the test file is already preprocessed; only parse it
  load.drop_quotes = load.drop_redacted = false;
  const auto test = text::load_corpus(a.test, load);
  const auto instances = eval::align_outputs(test, eval::read_outputs(a.outputs));
  const text::StopwordList custom = a.stopwords.empty() ? text::StopwordList{} : text::StopwordList::load(a.stopwords);
  const text::StopwordList& stop = a.stopwords.empty() ? text::StopwordList::english() : custom;

  ordered_json settings;
  settings["stopwords"] = stop.hash();
  settings["entropy_base"] = "e";
  settings["meteor"] = {{"alpha", 0.9}, {"beta", 3.0}, {"gamma", 0.5}};
  eval::EvalOptions opts;
  opts.stopwords = &stop;
  opts.config_hash = eval::fnv1a_hex(settings.dump());
  const auto report = eval::evaluate_corpus(instances, opts);
  fs::create_directories(dir);
  write_file(dir / a.out, eval::report_to_json(report) + "\n");
  err << std::setprecision(4) << "cmr: BLEU " << report.bleu4 << " NIST " << report.nist << " METEOR "
      << report.meteor << " grounding F1 " << report.grounding_f1 << "; report in " << (dir / a.out).string()
      << '\n';

  if (a.bootstrap > 0) {
    if (a.compare.empty()) throw ConfigError("--bootstrap needs --compare OUTPUTS for the second system");
    const auto other = eval::align_outputs(test, eval::read_outputs(a.compare));
    const auto& names = a.metrics.empty() ? eval::bootstrap_metric_names() : a.metrics;
    ordered_json j;
    j["system_a"] = a.outputs;
    j["system_b"] = a.compare;
    j["replicates"] = a.bootstrap;
    j["seed"] = a.seed;
    ordered_json results = ordered_json::array();
    for (const auto& m : names) {
      const auto r = eval::paired_bootstrap(instances, other, m, a.bootstrap, a.seed, stop);
      ordered_json row;
      row["metric"] = r.metric;
      row["score_a"] = r.score_a;
      row["score_b"] = r.score_b;
      row["a_wins"] = r.a_wins;
      row["b_wins"] = r.b_wins;
      row["ties"] = r.ties;
      row["p_value"] = r.p_value;
      row["significant"] = {{"0.05", r.p_value < 0.05}, {"0.01", r.p_value < 0.01}, {"0.001", r.p_value < 0.001}};
      results.push_back(std::move(row));
    }
    j["results"] = std::move(results);
    write_file(dir / "bootstrap.json", j.dump(2) + "\n");
    err << "cmr: paired bootstrap written to " << (dir / "bootstrap.json").string() << '\n';
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grounded response generation: preprocess, train, generate, evaluate."};
  app.name("cmr");
  app.require_subcommand(1);
  app.fallthrough();
  std::string output_dir = default_output_dir();
  app.add_option("-o,--output-dir", output_dir,
                 std::string("output directory (default: $") + kOutputDirEnv + " or ./cmr-out)");
  app.footer(std::string("Environment:\n  ") + kOutputDirEnv +
             "  default output directory when --output-dir is not given.\n"
             "Config precedence: built-in defaults < --config file < command-line flags.");

  ConfigLayers layers;

  SyntheticArgs syn;
  auto* synthetic = app.add_subcommand("synthetic", "write a synthetic grounded corpus");
  synthetic->add_option("--contexts", syn.config.contexts, "distinct (history, document) pairs");
  synthetic->add_option("--responses-per-context", syn.config.responses_per_context);
  synthetic->add_option("--grounding-rate", syn.config.grounding_rate);
  synthetic->add_option("--fact-pool", syn.config.fact_pool);
  synthetic->add_option("--facts-per-document", syn.config.facts_per_document);
  synthetic->add_option("--document-sentences", syn.config.document_sentences);
  synthetic->add_option("--sentence-length", syn.config.sentence_length);
  synthetic->add_option("--history-turns", syn.config.history_turns);
  synthetic->add_option("--max-chat-words", syn.config.max_chat_words);
  synthetic->add_option("--seed", syn.config.seed);
  synthetic->add_option("--out", syn.out, "file name inside the output directory");

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "filter, truncate and split a JSON-lines corpus");
  preprocess->add_option("input", pre.input, "raw corpus (JSON lines)")->required();
  preprocess->add_option("--valid-fraction", pre.valid_fraction);
  preprocess->add_option("--test-fraction", pre.test_fraction);
  preprocess->add_flag("--multi-reference", pre.multi_reference,
                       "build the test split from groups of 6+ responses (1 human + 5 references)");
  preprocess->add_option("--min-turn-length", pre.min_turn_length);
  preprocess->add_flag("--keep-redacted", pre.keep_redacted);
  preprocess->add_flag("--keep-quotes", pre.keep_quotes);
  add_config_options(preprocess, layers, false);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint.json, last.json, loss.csv");
  train_cmd->add_option("--train", tr.train, "training corpus")->required();
  train_cmd->add_option("--valid", tr.valid, "validation corpus (default: training loss)");
  train_cmd->add_option("--embeddings", tr.embeddings, "pretrained word vectors");
  train_cmd->add_flag("--freeze-embeddings", tr.freeze_embeddings);
  train_cmd->add_option("--contextual", tr.contextual, "contextual vector file");
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  train_cmd->add_option("--tau", layers.tau, "softmax temperature");
  add_config_options(train_cmd, layers, true);

  GenerateArgs ge;
  auto* generate = app.add_subcommand("generate", "sample responses with a trained model");
  generate->add_option("--checkpoint", ge.checkpoint)->required();
  generate->add_option("--input", ge.input, "corpus to respond to");
  generate->add_option("--vocab", ge.vocab, "vocabulary file that must match the checkpoint");
  generate->add_option("--contextual", ge.contextual);
  generate->add_option("--tau", ge.tau, "softmax temperature (default: checkpoint config)");
  generate->add_option("--top-k", ge.top_k, "sample from the k most probable tokens")->capture_default_str();
  generate->add_option("--max-length", ge.max_length);
  generate->add_option("--seed", ge.seed);
  generate->add_flag("--dump-attention", ge.dump_attention, "write attention/<id>.json and .svg per instance");
  generate->add_flag("--interactive", ge.interactive, "read one JSON record from stdin, print the response");
  generate->add_option("--out", ge.out, "file name inside the output directory");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "score outputs; writes report.json");
  evaluate->add_option("--outputs", ev.outputs, "system outputs (id<TAB>response)")->required();
  evaluate->add_option("--test", ev.test, "test corpus with references")->required();
  evaluate->add_option("--stopwords", ev.stopwords, "stopword file (default: bundled English list)");
  evaluate->add_option("--compare", ev.compare, "second system for the paired bootstrap");
  evaluate->add_option("--bootstrap", ev.bootstrap, "paired bootstrap replicates (e.g. 10000)");
  evaluate->add_option("--metric", ev.metrics, "bootstrap metric, repeatable (default: all)");
  evaluate->add_option("--seed", ev.seed);
  evaluate->add_option("--out", ev.out, "file name inside the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    const fs::path dir = output_dir;
    if (synthetic->parsed()) return cmd_synthetic(syn, dir, err);
    if (preprocess->parsed()) return cmd_preprocess(pre, layers, dir, err);
    if (train_cmd->parsed()) return cmd_train(tr, layers, dir, err);
    if (generate->parsed()) {
      if (!ge.interactive && ge.input.empty()) throw ConfigError("generate needs --input or --interactive");
      return cmd_generate(ge, dir, in, out, err);
    }
    if (evaluate->parsed()) return cmd_evaluate(ev, dir, err);
  } catch (const ConfigError& e) {
    err << "cmr: config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "cmr: parse error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    err << "cmr: I/O error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "cmr: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cmr::cli
