#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cmr/errors.hpp"
#include "cmr/model.hpp"
#include "gradcheck.hpp"

using namespace cmr;
using namespace cmr::model;
using cmr::testing::check_gradients;
using cmr::testing::random_tensor;
using cmr::testing::weighted_total;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.vocab = 12;
  d.embedding = 5;
  d.hidden = 6;
  d.ffn_inner = 7;
  return d;
}

EncoderInput make_input(std::vector<int> history, std::vector<int> document) {
  EncoderInput in;
  in.id = "t";
  in.history = std::move(history);
  in.document = std::move(document);
  return in;
}

std::vector<Parameter*> all_parameters(Model& m) {
  std::vector<Parameter*> out;
  m.visit([&](const std::string&, Parameter& p) { out.push_back(&p); });
  return out;
}

double row_sum(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (double v : t.row(r)) s += v;
  return s;
}

const text::ContextualVectorProvider kNoContext = text::ContextualVectorProvider::disabled();

}  // namespace

TEST_CASE("variant names") {
  CHECK(parse_variant("cmr+w") == Variant::CmrW);
  CHECK(variant_name(parse_variant("cmr-f")) == "cmr-f");
  CHECK_THROWS_AS(parse_variant("memnet"), ConfigError);
  CHECK(reads_document(Variant::Cmr));
  CHECK_FALSE(reads_document(Variant::CmrF));
  ModelDims odd = small_dims();
  odd.hidden = 5;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
}

TEST_CASE("lexicon encoding shapes and position independence") {
  Rng rng(1);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  Graph g;
  const auto lex = lexicon_encode(g, p, make_input({4, 5, 6}, {7, 8, 7, 9, 10}));
  CHECK(lex.history.value().shape() == Shape{3, 6});
  CHECK(lex.document.value().shape() == Shape{5, 6});
  const Tensor& d = lex.document.value();
  for (std::size_t c = 0; c < 6; ++c) CHECK(d(0, c) == d(2, c));
  CHECK_THROWS_AS(lexicon_encode(g, p, make_input({}, {7})), DomainError);
  CHECK_THROWS_AS(lexicon_encode(g, p, make_input({4}, {})), DomainError);
}

TEST_CASE("history and document FFNs are distinct, the contextual BiLSTM is shared") {
  Rng rng(2);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  CHECK(&p.history_ffn.weight1 != &p.document_ffn.weight1);
  CHECK_FALSE(p.history_ffn.weight1.value == p.document_ffn.weight1.value);
  // Disabled provider: BiLSTM input width equals the lexicon width.
  CHECK(p.contextual.in() == 6);

  Graph g;
  Var a = g.constant(random_tensor({4, 6}, rng));
  Var b = g.constant(random_tensor({3, 6}, rng));
  const auto forward = contextual_encode(g, p, {a, b}, kNoContext, "x");
  const auto swapped = contextual_encode(g, p, {b, a}, kNoContext, "x");
  CHECK(forward.history.value().shape() == Shape{4, 6});
  CHECK(forward.document.value().shape() == Shape{3, 6});
  CHECK(forward.history.value() == swapped.document.value());
  CHECK(forward.document.value() == swapped.history.value());

  // Both streams read the same parameter objects.
  std::map<const Parameter*, int> uses;
  for (std::size_t id = 0; id < g.size(); ++id)
    if (g.parameter(id)) ++uses[g.parameter(id)];
  CHECK(uses[&p.contextual.forward.input_weight] == 4);
}

TEST_CASE("contextual vectors widen the BiLSTM input") {
  const auto path = std::filesystem::temp_directory_path() / "cmr_test_model_ctx.txt";
  {
    std::ofstream out(path);
    for (int pos = 0; pos < 2; ++pos) out << "t/h/" << pos << " 0.1 0.2 0.3\n";
    out << "t/d/0 0.5 0.5 0.5\n";
  }
  const auto provider = text::ContextualVectorProvider::from_file(path, 3);
  ModelDims dims = small_dims();
  dims.contextual = 3;
  Rng rng(3);
  EncoderParams p = EncoderParams::init(dims, Variant::Cmr, rng);
  CHECK(p.contextual.in() == 9);
  Graph g;
  const auto mem = encode(g, p, make_input({4, 5}, {6}), provider);
  CHECK(mem.memory.value().shape() == Shape{1, 6});
  // Two document positions but only one stored vector.
  CHECK_THROWS_AS(encode(g, p, make_input({4, 5}, {6, 7}), provider), DomainError);
  // A model built without contextual vectors rejects them.
  EncoderParams plain = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  CHECK_THROWS_AS(encode(g, plain, make_input({4, 5}, {6}), provider), DomainError);
}

TEST_CASE("memory construction shapes and attention rows") {
  Rng rng(4);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  for (std::size_t n : {1, 7, 500}) {
    std::vector<int> doc(n);
    for (std::size_t i = 0; i < n; ++i) doc[i] = 4 + static_cast<int>(rng.below(8));
    Graph g;
    const auto mem = encode(g, p, make_input({4, 5, 6, 11}, doc), kNoContext);
    CHECK(mem.rows() == n);
    CHECK(mem.memory.value().cols() == 6);
    CHECK(mem.memory.value().all_finite());
    const Tensor& cw = mem.blocks.cross_weights.value();
    const Tensor& sw = mem.blocks.self_weights.value();
    CHECK(cw.shape() == Shape{n, 4});
    CHECK(sw.shape() == Shape{n, n});
    for (std::size_t r = 0; r < n; ++r) {
      CHECK(std::abs(row_sum(cw, r) - 1.0) <= 1e-9);
      CHECK(std::abs(row_sum(sw, r) - 1.0) <= 1e-9);
    }
  }
  Graph g;
  CHECK_THROWS_AS(build_memory(g, p, g.constant(random_tensor({2, 6}, rng)), g.constant(Tensor({0, 6}))), DomainError);
  CHECK_THROWS_AS(build_memory(g, p, g.constant(random_tensor({2, 6}, rng)), Var()), DomainError);
}

TEST_CASE("single-token history is copied by cross-attention") {
  Rng rng(5);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  Graph g;
  const Tensor h = random_tensor({1, 6}, rng);
  const auto blocks = build_memory(g, p, g.constant(h), g.constant(random_tensor({5, 6}, rng)));
  const Tensor& ctx = blocks.cross_context.value();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) CHECK(ctx(r, c) == h(0, c));
}

TEST_CASE("zero history makes the cross-attention term vanish") {
  Rng rng(6);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  Graph g;
  const Tensor doc = random_tensor({4, 6}, rng);
  const auto a = build_memory(g, p, g.constant(Tensor({3, 6})), g.constant(doc));
  for (double v : a.cross_context.value().values()) CHECK(v == 0.0);
  // Memory then depends only on the document path.
  const auto b = build_memory(g, p, g.constant(Tensor({5, 6})), g.constant(doc));
  CHECK(a.memory.value() == b.memory.value());
}

TEST_CASE("cross-attention is permutation equivariant over document rows") {
  Rng rng(7);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  const Tensor hist = random_tensor({3, 6}, rng);
  const Tensor doc = random_tensor({4, 6}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor permuted({4, 6});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c) permuted(r, c) = doc(perm[r], c);
  Graph g;
  const auto a = build_memory(g, p, g.constant(hist), g.constant(doc));
  const auto b = build_memory(g, p, g.constant(hist), g.constant(permuted));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(b.cross_context.value()(r, c) == doctest::Approx(a.cross_context.value()(perm[r], c)).epsilon(1e-14));
}

TEST_CASE("history pooling") {
  Rng rng(8);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  Graph g;
  const Tensor one = random_tensor({1, 6}, rng);
  const auto single = pool_history(g, p, g.constant(one));
  for (std::size_t c = 0; c < 6; ++c) CHECK(single.vector.value()[c] == one(0, c));
  for (int trial = 0; trial < 50; ++trial) {
    const auto pooled = pool_history(g, p, g.constant(random_tensor({1 + rng.below(20), 6}, rng, 3.0)));
    const auto w = pooled.weights.value().values();
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) <= 1e-9);
  }
  Parameter hist(random_tensor({4, 6}, rng));
  const Tensor weights = random_tensor({6}, rng);
  const auto r = check_gradients({&p.pool_query, &hist}, [&](Graph& gg) {
    return weighted_total(gg, pool_history(gg, p, gg.param(hist)).vector, weights);
  });
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("encoder gradients") {
  Rng rng(9);
  EncoderParams p = EncoderParams::init(small_dims(), Variant::Cmr, rng);
  const auto input = make_input({4, 5, 11}, {6, 7, 8, 6});
  SUBCASE("embedding and FFN") {
    const Tensor w = random_tensor({4, 6}, rng);
    const auto r = check_gradients(
        {&p.embeddings.matrix, &p.document_ffn.weight1, &p.document_ffn.bias1, &p.document_ffn.weight2},
        [&](Graph& g) { return weighted_total(g, lexicon_encode(g, p, input).document, w); });
    CHECK(r.max_relative_error < 1e-4);
  }
  SUBCASE("attention blocks and memory") {
    Parameter hist(random_tensor({3, 6}, rng));
    Parameter doc(random_tensor({4, 6}, rng));
    const Tensor w = random_tensor({4, 6}, rng);
    std::vector<Parameter*> targets{&hist, &doc, &p.self_attention.weight, &p.self_attention.bias,
                                    &p.memory.forward.input_weight, &p.memory.backward.recurrent_weight};
    const auto r = check_gradients(
        targets, [&](Graph& g) { return weighted_total(g, build_memory(g, p, g.param(hist), g.param(doc)).memory, w); });
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("variants allocate the documented modules") {
  Rng rng(10);
  Model seq = Model::init(small_dims(), Variant::Seq2Seq, rng);
  Model cmrf = Model::init(small_dims(), Variant::CmrF, rng);
  Model cmr = Model::init(small_dims(), Variant::Cmr, rng);
  Model cmrw = Model::init(small_dims(), Variant::CmrW, rng);
  CHECK(seq.parameter_count() < cmr.parameter_count());
  CHECK(cmrf.parameter_count() < cmr.parameter_count());
  std::vector<std::pair<std::string, Shape>> a, b;
  cmr.visit([&](const std::string& n, Parameter& p) { a.emplace_back(n, p.value.shape()); });
  cmrw.visit([&](const std::string& n, Parameter& p) { b.emplace_back(n, p.value.shape()); });
  CHECK(a == b);
  CHECK(seq.encoder.contextual.in() == 5);  // embeddings feed the BiLSTM directly
}

TEST_CASE("cmr-f never reads documents") {
  Rng rng(11);
  Model m = Model::init(small_dims(), Variant::CmrF, rng);
  text::Vocabulary vocab;
  text::ConversationInstance inst;
  inst.id = "i";
  inst.history = {{"<title>", "<p>"}};
  inst.document = text::Document({{"<h1>", "<h2>"}}, {{"p"}});
  inst.response = {"<h3>"};
  reset_document_reads();
  const auto input = make_encoder_input(inst, vocab, Variant::CmrF);
  CHECK(input.document.empty());
  Graph g;
  const auto mem = encode(g, m.encoder, input, kNoContext);
  CHECK(mem.memory.value() == Tensor({1, 6}));
  const auto loss = instance_loss(g, m, input, vocab.encode(inst.response), kNoContext);
  g.backward(loss.loss);
  CHECK(document_reads() == 0);
  make_encoder_input(inst, vocab, Variant::Cmr);
  CHECK(document_reads() == 1);
}

TEST_CASE("decoder initial state") {
  Rng rng(12);
  Model m = Model::init(small_dims(), Variant::Cmr, rng);
  Graph g;
  const auto mem = encode(g, m.encoder, make_input({4, 5}, {6, 7}), kNoContext);
  const auto s = init_state(g, m.decoder, m.decoder_embeddings(), mem);
  CHECK(s.step == 0);
  CHECK(s.prev_token == text::Vocabulary::kBos);
  const Tensor& W = m.decoder.init_projection.value;
  const Tensor& pooled = mem.history_pooled.value();
  for (std::size_t r = 0; r < 6; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 6; ++c) acc += W(r, c) * pooled[c];
    CHECK(s.h.value()[r] == doctest::Approx(acc).epsilon(1e-15));
  }
  for (std::size_t c = 0; c < 5; ++c)
    CHECK(s.prev_embedding.value()[c] == m.decoder.output_embeddings.value(text::Vocabulary::kBos, c));
  const auto again = init_state(g, m.decoder, m.decoder_embeddings(), mem);
  CHECK(again.h.value() == s.h.value());
  CHECK(again.prev_embedding.value() == s.prev_embedding.value());
}

TEST_CASE("decode step distribution and temperature") {
  Rng rng(13);
  Model m = Model::init(small_dims(), Variant::Cmr, rng);
  for (int trial = 0; trial < 20; ++trial) {
    for (auto& v : m.decoder.output.weight.value.values()) v = rng.uniform(-3, 3);
    Graph g;
    const auto mem = encode(g, m.encoder, make_input({4, 5}, {6, 7, 8}), kNoContext);
    const auto s = init_state(g, m.decoder, m.decoder_embeddings(), mem);
    int argmax = -1;
    for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      const auto out = decode_step(g, m.decoder, s, mem, tau);
      const auto p = out.probabilities.value().values();
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
      CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v >= 0.0; }));
      const int am = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      if (argmax < 0) argmax = am;
      CHECK(am == argmax);
      CHECK(out.next.step == 1);
    }
  }
  Graph g;
  Var bad_memory = g.constant(Tensor({2, 4}));
  EncoderMemory mem;
  mem.memory = bad_memory;
  mem.history_pooled = g.constant(Tensor({6}));
  const auto s = init_state(g, m.decoder, m.decoder_embeddings(), mem);
  CHECK_THROWS_AS(decode_step(g, m.decoder, s, mem), ShapeError);
}

TEST_CASE("one decode step gradient") {
  Rng rng(14);
  Model m = Model::init(small_dims(), Variant::Cmr, rng);
  Parameter memory(random_tensor({4, 6}, rng));
  Parameter pooled(random_tensor({6}, rng));
  const int target[1] = {7};
  std::vector<Parameter*> targets{&m.decoder.output.weight, &m.decoder.output.bias, &m.decoder.mixer,
                                  &m.decoder.gru.input_weight, &m.decoder.gru.recurrent_weight,
                                  &m.decoder.gru.input_bias, &m.decoder.gru.recurrent_bias,
                                  &m.decoder.init_projection, &memory, &pooled};
  const auto r = check_gradients(targets, [&](Graph& g) {
    EncoderMemory mem;
    mem.memory = g.param(memory);
    mem.history_pooled = g.param(pooled);
    const auto s = init_state(g, m.decoder, m.decoder_embeddings(), mem);
    const auto out = decode_step(g, m.decoder, s, mem, 0.7);
    return ad::sum(ad::cross_entropy(out.logits, target, 0.7));
  });
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("teacher forced loss") {
  Rng rng(15);
  Model m = Model::init(small_dims(), Variant::Cmr, rng);
  const auto input = make_input({4, 5}, {6, 7, 8});
  const std::vector<int> response{9, 10, 4};
  SUBCASE("uniform output gives ln V") {
    m.decoder.output.weight.value.fill(0.0);
    m.decoder.output.bias.value.fill(0.0);
    Graph g;
    const auto loss = instance_loss(g, m, input, response, kNoContext);
    CHECK(loss.loss.value()[0] == doctest::Approx(std::log(12.0)).epsilon(1e-14));
    CHECK(loss.token_losses.size() == 4);
  }
  SUBCASE("first token loss equals the single-step NLL") {
    Graph g;
    const auto mem = encode(g, m.encoder, input, kNoContext);
    const auto loss = teacher_forced_loss(g, m.decoder, m.decoder_embeddings(), mem, std::vector<int>{9});
    const auto s = init_state(g, m.decoder, m.decoder_embeddings(), mem);
    const auto step = decode_step(g, m.decoder, s, mem);
    CHECK(loss.token_losses[0] == doctest::Approx(-std::log(step.probabilities.value()[9])).epsilon(1e-12));
    CHECK(loss.loss.value()[0] >= 0.0);
    CHECK_THROWS_AS(teacher_forced_loss(g, m.decoder, m.decoder_embeddings(), mem, std::vector<int>{}), DomainError);
  }
  SUBCASE("full model gradient") {
    Model small = Model::init(small_dims(), Variant::Cmr, rng);
    const auto r = check_gradients(all_parameters(small), [&](Graph& g) {
      return instance_loss(g, small, input, response, kNoContext).loss;
    });
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.checked > 1000);
  }
}

TEST_CASE("top-k sampling contract") {
  Rng rng(16);
  SUBCASE("k=1 is argmax") {
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> p(1 + rng.below(30));
      for (double& v : p) v = rng.uniform();
      const double total = std::accumulate(p.begin(), p.end(), 0.0);
      for (double& v : p) v /= total;
      const int expected = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      CHECK(top_k_sample(p, 1, rng) == expected);
    }
  }
  SUBCASE("ties go to the lower id") {
    const std::vector<double> p{0.1, 0.3, 0.3, 0.3};
    CHECK(top_k_sample(p, 1, rng) == 1);
    std::set<int> seen;
    for (int i = 0; i < 2000; ++i) seen.insert(top_k_sample(p, 2, rng));
    CHECK(seen == std::set<int>{1, 2});
  }
  SUBCASE("k=3 support and frequencies") {
    const std::vector<double> p{0.02, 0.3, 0.05, 0.3, 0.01, 0.3, 0.02};
    std::map<int, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[top_k_sample(p, 3, rng)];
    CHECK(counts.size() == 3);
    const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
    for (int id : {1, 3, 5}) CHECK(std::abs(counts[id] - n / 3.0) <= 3 * sigma);
  }
  SUBCASE("k beyond the vocabulary is clamped") {
    const std::vector<double> p{0.5, 0.5};
    const int id = top_k_sample(p, 10, rng);
    CHECK((id == 0 || id == 1));
  }
}

TEST_CASE("generation") {
  Rng rng(17);
  ModelDims dims = small_dims();
  dims.vocab = 24;
  Model m = Model::init(dims, Variant::Cmr, rng);
  const auto input = make_input({16, 17}, {18, 19, 20, 21, 22});
  // Suppress EOS so the length bound is reached.
  m.decoder.output.bias.value[text::Vocabulary::kEos] = -50.0;
  GenerationConfig cfg;
  cfg.max_length = 7;
  cfg.k = 5;
  cfg.seed = 3;
  const auto a = generate_response(m, input, kNoContext, cfg);
  CHECK(a.tokens.size() == 7);
  CHECK(a.attention.shape() == Shape{7, 5});
  for (int t : a.tokens) CHECK(t >= int(text::Vocabulary::reserved_tokens().size()));
  for (std::size_t r = 0; r < 7; ++r) CHECK(std::abs(row_sum(a.attention, r) - 1.0) <= 1e-9);
  const auto b = generate_response(m, input, kNoContext, cfg);
  CHECK(a.tokens == b.tokens);
  CHECK(a.attention == b.attention);
  m.decoder.output.bias.value[text::Vocabulary::kEos] = 50.0;
  CHECK(generate_response(m, input, kNoContext, cfg).tokens.empty());
  cfg.tau = 0.0;
  CHECK_THROWS_AS(generate_response(m, input, kNoContext, cfg), ConfigError);
}
