#include <cmath>
#include <fstream>
#include <sstream>

#include "cmr/errors.hpp"
#include "cmr/metrics.hpp"
#include "cmr/random.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cmr;
using namespace cmr::eval;
using text::Document;
using text::StopwordList;

namespace {

Tokens toks(const std::string& s) { return text::tokenize(s); }

nlohmann::json read_json(const std::string& name) {
  std::ifstream in(std::string(CMR_TEST_DATA_DIR) + "/" + name);
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

struct Golden {
  std::vector<Tokens> hyps;
  std::vector<std::vector<Tokens>> refs;
};

Tokens split_ws(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Golden golden() {
  Golden g;
  for (const auto& item : read_json("golden_corpus.json")) {
    g.hyps.push_back(split_ws(item["hypothesis"]));
    std::vector<Tokens> refs;
    for (const auto& r : item["references"]) refs.push_back(split_ws(r));
    g.refs.push_back(refs);
  }
  return g;
}

StopwordList stops(std::initializer_list<const char*> words) {
  std::unordered_set<std::string> s;
  for (auto w : words) s.insert(w);
  return StopwordList(s, "test");
}

Document doc(const std::string& s) { return Document({toks(s)}, {{}}); }

}  // namespace

TEST_CASE("golden corpus matches the reference scorers") {
  const auto g = golden();
  const auto expected = read_json("golden_expected.json");
  REQUIRE(g.hyps.size() == 20);

  CHECK(std::abs(bleu4(g.hyps, g.refs) - expected["bleu4"].get<double>()) < 1e-6);
  CHECK(std::abs(nist(g.hyps, g.refs) - expected["nist"].get<double>()) < 1e-4);

  std::vector<std::vector<Tokens>> first;
  for (const auto& r : g.refs) first.push_back({r.front()});
  CHECK(std::abs(bleu4(g.hyps, first) - expected["bleu4_first_reference"].get<double>()) < 1e-6);
  CHECK(std::abs(nist(g.hyps, first) - expected["nist_first_reference"].get<double>()) < 1e-4);

  double mean = 0;
  for (std::size_t i = 0; i < g.hyps.size(); ++i) {
    CAPTURE(i);
    const double m = meteor_variant(g.hyps[i], g.refs[i]);
    CHECK(std::abs(m - expected["meteor"][i].get<double>()) < 1e-6);
    mean += m;
  }
  CHECK(std::abs(mean / 20.0 - expected["meteor_mean"].get<double>()) < 1e-6);
}

TEST_CASE("bleu4 properties") {
  const std::vector<Tokens> hyps{toks("the cat sat on the mat today"), toks("a dog ran in the park")};
  CHECK(bleu4(hyps, std::vector<std::vector<Tokens>>{{hyps[0]}, {hyps[1]}}) == doctest::Approx(1.0).epsilon(1e-15));
  // including the hypothesis among several references is still perfect
  CHECK(bleu4(hyps, std::vector<std::vector<Tokens>>{{toks("x y z"), hyps[0]}, {hyps[1], toks("q")}}) ==
        doctest::Approx(1.0).epsilon(1e-15));
  // no shared 4-gram
  CHECK(bleu4(std::vector<Tokens>{toks("a b c d e")}, std::vector<std::vector<Tokens>>{{toks("a b c x d e")}}) == 0.0);

  // adding a reference never lowers the score at equal reference lengths
  Rng rng(3);
  const Tokens words{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    auto random_tokens = [&](std::size_t n) {
      Tokens t;
      for (std::size_t i = 0; i < n; ++i) t.push_back(words[rng.below(words.size())]);
      return t;
    };
    const Tokens h = random_tokens(8);
    const std::vector<std::vector<Tokens>> one{{random_tokens(8)}};
    auto two = one;
    two[0].push_back(random_tokens(8));
    CHECK(bleu4(std::vector<Tokens>{h}, two) >= bleu4(std::vector<Tokens>{h}, one));
  }
  CHECK_THROWS_AS(bleu4(std::vector<Tokens>{}, std::vector<std::vector<Tokens>>{}), DomainError);
}

TEST_CASE("nist properties") {
  CHECK(nist(std::vector<Tokens>{toks("p q r")}, std::vector<std::vector<Tokens>>{{toks("a b c")}}) == 0.0);
  // "common" appears in every reference, "rare" only once; matching the rare
  // word is worth more
  const std::vector<std::vector<Tokens>> refs{{toks("common rare x")}, {toks("common y z")}, {toks("common w v")}};
  const std::vector<Tokens> with_rare{toks("rare q s"), toks("m n o"), toks("k l j")};
  const std::vector<Tokens> with_common{toks("common q s"), toks("m n o"), toks("k l j")};
  CHECK(nist(with_rare, refs) > nist(with_common, refs));
  CHECK(nist(with_rare, refs) >= 0.0);
}

TEST_CASE("meteor variant") {
  CHECK(meteor_variant(toks("a b c"), std::vector<Tokens>{toks("x y z")}) == 0.0);
  const Tokens ten = toks("one two three four five six seven eight nine ten");
  // F-mean 1, one chunk over ten matches: 1 - 0.5 * 0.1^3 (NLTK gives 0.9995)
  CHECK(meteor_variant(ten, std::vector<Tokens>{ten}) == doctest::Approx(0.9995).epsilon(1e-12));
  const std::vector<Tokens> refs{toks("the cat sat on the mat"), toks("a cat was on a mat"), toks("on the mat sat a cat")};
  const Tokens hyp = toks("the cat was on the mat");
  const double s = meteor_variant(hyp, refs);
  std::vector<Tokens> reordered{refs[2], refs[0], refs[1]};
  CHECK(meteor_variant(hyp, reordered) == s);
  CHECK(s >= 0.0);
  CHECK(s <= 1.0);
}

TEST_CASE("diversity counts") {
  const auto d1 = diversity(std::vector<Tokens>{toks("a a b")}, 1);
  CHECK(d1.distinct == 2.0 / 3.0);
  CHECK(diversity(std::vector<Tokens>{toks("a a a")}, 2).distinct == 0.5);
  const auto e4 = diversity(std::vector<Tokens>{toks("a b c d"), toks("b c d e"), toks("c d e f"), toks("d e f g")}, 4);
  CHECK(e4.types == 4);
  CHECK(e4.entropy == std::log(4.0));
  const auto empty = diversity(std::vector<Tokens>{toks("a b")}, 4);
  CHECK(empty.empty);
  CHECK(empty.entropy == 0.0);
  CHECK(empty.distinct == 0.0);

  // duplicating the corpus halves distinct-n
  const std::vector<Tokens> outs{toks("a b c a"), toks("b b d")};
  auto doubled = outs;
  doubled.insert(doubled.end(), outs.begin(), outs.end());
  for (std::size_t n = 1; n <= 3; ++n)
    CHECK(diversity(doubled, n).distinct == doctest::Approx(diversity(outs, n).distinct / 2.0).epsilon(1e-15));
}

TEST_CASE("grounding definition") {
  const auto sw = stops({"the", "is"});
  auto g = grounding(toks("the capital is paris"), doc("paris capital france"), toks("what"), sw);
  CHECK(g.match == 2);
  CHECK(g.precision == 1.0);
  CHECK(g.recall == 2.0 / 3.0);
  CHECK(g.f1 == doctest::Approx(0.8).epsilon(1e-15));

  g = grounding(toks("capital paris"), doc("paris capital france"), toks("what is the capital of paris"), sw);
  CHECK(g.match == 0);
  CHECK(g.precision == 0.0);
  CHECK(g.recall == 0.0);
  CHECK(g.f1 == 0.0);

  g = grounding(toks("the is"), doc("paris capital france"), {}, sw);
  CHECK(g.empty_hypothesis);
  CHECK(g.precision == 0.0);

  // type-level: copying a word twice counts once, punctuation and tags ignored
  const Document tagged({toks("<anchor> paris </anchor> capital .")}, {{"title"}});
  g = grounding(toks("paris paris !"), tagged, {}, sw);
  CHECK(g.match == 1);
  CHECK(g.hypothesis_content == 2);
  CHECK(g.document_content == 2);
  CHECK(g.precision == 0.5);
}

TEST_CASE("grounding consistency identity") {
  const auto& sw = StopwordList::english();
  const Tokens words{"the", "a", "of", "paris", "river", "france", "city", "old", "bridge", "is", ".", "tower"};
  Rng rng(11);
  auto random_tokens = [&](std::size_t n) {
    Tokens t;
    for (std::size_t i = 0; i < n; ++i) t.push_back(words[rng.below(words.size())]);
    return t;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const auto hyp = random_tokens(1 + rng.below(10));
    const Document d({random_tokens(1 + rng.below(20))}, {{}});
    const auto ctx = random_tokens(rng.below(6));
    const auto g = grounding(hyp, d, ctx, sw);
    CHECK(g.precision * double(g.hypothesis_content) == doctest::Approx(double(g.match)).epsilon(1e-12));
    CHECK(g.recall * double(g.document_content) == doctest::Approx(double(g.match)).epsilon(1e-12));
    CHECK(g.precision >= 0.0);
    CHECK(g.precision <= 1.0);
    CHECK(g.recall <= 1.0);
  }
}

namespace {

std::vector<text::ConversationInstance> eval_testset() {
  std::vector<text::ConversationInstance> out;
  const char* responses[] = {"the tower is in paris .", "rivers flow to the sea", "i like old bridges a lot"};
  const char* docs[] = {"the eiffel tower stands in paris france", "the river seine flows to the sea",
                        "the old bridge crosses the river"};
  for (int i = 0; i < 3; ++i) {
    text::ConversationInstance inst;
    inst.id = "t" + std::to_string(i);
    inst.history = {toks("where is it ?"), toks("tell me more")};
    inst.document = doc(docs[i]);
    inst.response = toks(responses[i]);
    out.push_back(inst);
  }
  return out;
}

}  // namespace

TEST_CASE("evaluate_corpus report") {
  const auto test = eval_testset();
  std::vector<SystemOutput> gold;
  for (const auto& t : test) gold.push_back({t.id, t.response});
  const auto inst = align_outputs(test, gold);
  REQUIRE(inst.size() == 3);
  CHECK(inst[0].context == toks("where is it ? tell me more"));

  EvalOptions opts;
  opts.config_hash = fnv1a_hex("{}");
  const auto report = evaluate_corpus(inst, opts);
  CHECK(report.bleu4 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(report.meteor == doctest::Approx(1.0 - 0.5 * std::pow(1.0 / 6.0, 3) / 3.0 -
                                         0.5 * std::pow(1.0 / 5.0, 3) / 3.0 - 0.5 * std::pow(1.0 / 6.0, 3) / 3.0));
  double p = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto g = grounding(test[i].response, test[i].document, inst[i].context, StopwordList::english());
    CHECK(report.instances[i].grounding.precision == g.precision);
    p += g.precision;
  }
  CHECK(report.grounding_precision == doctest::Approx(p / 3));
  CHECK(report.length == doctest::Approx((6.0 + 5.0 + 6.0) / 3.0));

  const auto json_text = report_to_json(report);
  CHECK(json_text == report_to_json(evaluate_corpus(inst, opts)));
  const auto j = nlohmann::json::parse(json_text);
  std::vector<std::string> columns;
  for (const auto& [k, v] : j["corpus"].items()) columns.push_back(k);
  std::sort(columns.begin(), columns.end());
  std::vector<std::string> table{"BLEU", "Distinct-1", "Distinct-2", "Entropy-4", "F1",
                                 "Len",  "METEOR",     "NIST",       "Precision", "Recall"};
  CHECK(columns == table);
  CHECK(j["instances"].size() == 3);
  CHECK(j["metadata"]["entropy_base"] == "e");
  CHECK(j["metadata"]["stopword_hash"] == StopwordList::english().hash());
  CHECK(j["metadata"]["config_hash"] == opts.config_hash);

  // misalignment names the ids
  auto shuffled = gold;
  std::swap(shuffled[0], shuffled[1]);
  try {
    align_outputs(test, shuffled);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("t1") != std::string::npos);
  }
  gold.pop_back();
  CHECK_THROWS_WITH_AS(align_outputs(test, gold), doctest::Contains("t2"), DomainError);
}

TEST_CASE("output files round trip") {
  const std::string path = (std::filesystem::temp_directory_path() / "cmr_test_outputs.txt").string();
  std::vector<SystemOutput> outs{{"a1", toks("hello there .")}, {"a2", {}}};
  write_outputs(path, outs);
  const auto back = read_outputs(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].tokens == outs[0].tokens);
  CHECK(back[1].id == "a2");
  CHECK(back[1].tokens.empty());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_outputs(path), IoError);
}

TEST_CASE("paired bootstrap") {
  const auto test = eval_testset();
  std::vector<SystemOutput> gold, weak;
  for (const auto& t : test) {
    gold.push_back({t.id, t.response});
    weak.push_back({t.id, toks("i do not know")});
  }
  const auto a = align_outputs(test, gold);
  const auto b = align_outputs(test, weak);
  for (const auto& metric : bootstrap_metric_names()) {
    CAPTURE(metric);
    const auto self = paired_bootstrap(a, a, metric, 500, 1);
    CHECK(self.ties == 500);
    CHECK(self.p_value == 1.0);
  }
  const auto r = paired_bootstrap(a, b, "bleu4", 1000, 7);
  CHECK(r.score_a == doctest::Approx(1.0));
  CHECK(r.score_b == 0.0);
  CHECK(r.a_wins == 1000);
  CHECK(r.p_value == 0.0);
  CHECK(r.score_a == bleu4(std::vector<Tokens>{a[0].hypothesis, a[1].hypothesis, a[2].hypothesis},
                           std::vector<std::vector<Tokens>>{a[0].references, a[1].references, a[2].references}));
  const auto n = paired_bootstrap(a, b, "nist", 10, 7);
  CHECK(n.score_a == doctest::Approx(nist(std::vector<Tokens>{a[0].hypothesis, a[1].hypothesis, a[2].hypothesis},
                                          std::vector<std::vector<Tokens>>{a[0].references, a[1].references,
                                                                           a[2].references})));
  CHECK_THROWS_AS(paired_bootstrap(a, b, "rouge", 10, 1), ConfigError);
}
