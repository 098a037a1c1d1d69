#include "cmr/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <string_view>

#include "cmr/errors.hpp"
#include "cmr/random.hpp"

namespace cmr::text {

namespace {

// Pools are disjoint. Chat words never occur in documents, filler never
// occurs outside documents.
constexpr std::array<std::string_view, 24> kTopics{
    "river",  "castle", "engine", "comet",  "violin", "glacier", "harbor", "orchid",
    "canyon", "falcon", "meadow", "pepper", "saturn", "tunnel",  "walrus", "zephyr",
    "bamboo", "cobalt", "dragon", "ember",  "fjord",  "granite", "helium", "island"};

constexpr std::array<std::string_view, 40> kFiller{
    "located", "built",   "region",  "known",   "history", "large",   "small",   "famous",
    "early",   "modern",  "century", "people",  "area",    "called",  "species", "found",
    "north",   "south",   "east",    "west",    "record",  "design",  "system",  "major",
    "common",  "several", "period",  "based",   "named",   "local",   "original", "public",
    "former",  "second",  "third",   "include", "various", "national", "native",  "study"};

constexpr std::array<std::string_view, 24> kChat{
    "lol",   "yeah",  "cool",   "think", "really", "wow",    "nice",  "guess",
    "maybe", "heard", "dude",   "sure",  "agree",  "love",   "weird", "honestly",
    "fun",   "neat",  "thanks", "okay",  "haha",   "indeed", "right", "totally"};

constexpr std::array<std::string_view, 8> kStop{"the", "a", "is", "of", "and", "it", "was", "that"};

constexpr std::array<std::string_view, 10> kSyllables{"ka", "zu", "xo", "qi", "vy", "jo", "wu", "fe", "ry", "ne"};

template <std::size_t N>
std::string pick(const std::array<std::string_view, N>& pool, Rng& rng) {
  return std::string(pool[rng.below(N)]);
}

}  // namespace

std::size_t fact_pool_limit() { return kSyllables.size() * kSyllables.size(); }

std::vector<std::string> fact_tokens(std::size_t n) {
  if (n > fact_pool_limit())
    throw DomainError("fact pool of " + std::to_string(n) + " exceeds " + std::to_string(fact_pool_limit()));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%zu", i % 10);
    out.push_back(std::string(kSyllables[i % kSyllables.size()]) + std::string(kSyllables[i / kSyllables.size()]) +
                  buf);
  }
  return out;
}

std::vector<ConversationInstance> generate_synthetic_corpus(const SyntheticConfig& config) {
  if (!(config.grounding_rate >= 0.0 && config.grounding_rate <= 1.0))
    throw DomainError("grounding rate must lie in [0,1], got " + std::to_string(config.grounding_rate));
  if (config.contexts == 0 || config.responses_per_context == 0 || config.fact_pool == 0 ||
      config.facts_per_document == 0 || config.document_sentences == 0 || config.sentence_length == 0 ||
      config.history_turns == 0)
    throw DomainError("synthetic corpus sizes must be positive");
  if (config.facts_per_document > config.fact_pool)
    throw DomainError("facts_per_document exceeds the fact pool");

  const auto facts = fact_tokens(config.fact_pool);
  Rng rng(config.seed);
  std::vector<ConversationInstance> corpus;
  std::size_t next_id = 0;

  for (std::size_t c = 0; c < config.contexts; ++c) {
    const std::string topic = pick(kTopics, rng);

    // History: chat turns, the topic word in the last turn, a question mark.
    std::vector<Tokens> history;
    for (std::size_t t = 0; t < config.history_turns; ++t) {
      Tokens turn;
      const std::size_t n = 1 + rng.below(3);
      for (std::size_t i = 0; i < n; ++i) turn.push_back(pick(kChat, rng));
      if (t + 1 == config.history_turns) {
        turn.push_back(pick(kStop, rng));
        turn.push_back(topic);
        turn.emplace_back("?");
      }
      history.push_back(std::move(turn));
    }

    // Document: a title naming the topic, then paragraphs of filler with the
    // planted facts wrapped in anchors.
    std::vector<std::size_t> fact_ids(facts.size());
    for (std::size_t i = 0; i < fact_ids.size(); ++i) fact_ids[i] = i;
    rng.shuffle(fact_ids);
    fact_ids.resize(config.facts_per_document);

    std::vector<Tokens> sentences{{topic, pick(kFiller, rng)}};
    std::vector<std::vector<std::string>> tags{{"title"}};
    for (std::size_t s = 0; s < config.document_sentences; ++s) {
      Tokens sentence;
      for (std::size_t i = 0; i < config.sentence_length; ++i)
        sentence.push_back(rng.bernoulli(0.25) ? pick(kStop, rng) : pick(kFiller, rng));
      sentences.push_back(std::move(sentence));
      tags.push_back({s == 0 ? "h1" : "p"});
    }
    std::vector<std::string> planted;
    for (std::size_t f = 0; f < fact_ids.size(); ++f) {
      Tokens& sentence = sentences[1 + rng.below(config.document_sentences)];
      // Insert between existing anchors only, never inside one.
      std::vector<std::size_t> slots{0};
      bool open = false;
      for (std::size_t i = 0; i < sentence.size(); ++i) {
        const Marker m = marker_of(sentence[i]);
        if (m == Marker::AnchorOpen) open = true;
        if (m == Marker::AnchorClose) open = false;
        if (!open) slots.push_back(i + 1);
      }
      const std::size_t at = slots[rng.below(slots.size())];
      const std::string& fact = facts[fact_ids[f]];
      sentence.insert(sentence.begin() + static_cast<std::ptrdiff_t>(at),
                      {std::string(kAnchorOpen), fact, std::string(kAnchorClose)});
    }
    for (const auto& sentence : sentences)
      for (const auto& token : sentence)
        if (std::find(facts.begin(), facts.end(), token) != facts.end()) planted.push_back(token);
    Document document(std::move(sentences), std::move(tags));

    for (std::size_t r = 0; r < config.responses_per_context; ++r) {
      ConversationInstance inst;
      char id[32];
      std::snprintf(id, sizeof id, "syn-%06zu", next_id++);
      inst.id = id;
      inst.history = history;
      inst.document = document;

      Tokens& response = inst.response;
      const bool grounded = rng.bernoulli(config.grounding_rate);
      const std::size_t before = rng.below(config.max_chat_words + 1);
      response.push_back(pick(kChat, rng));
      for (std::size_t i = 0; i < before; ++i) response.push_back(pick(kChat, rng));
      if (grounded) {
        std::vector<std::string> chosen = planted;
        rng.shuffle(chosen);
        chosen.resize(1 + rng.below(planted.size()));
        response.push_back(pick(kStop, rng));
        for (std::size_t i = 0; i < chosen.size(); ++i) {
          if (i) response.emplace_back("and");
          response.push_back(chosen[i]);
        }
      } else {
        response.push_back(pick(kStop, rng));
        response.push_back(topic);
      }
      response.emplace_back(rng.bernoulli(0.5) ? "." : "!");
      corpus.push_back(std::move(inst));
    }
  }
  return corpus;
}

}  // namespace cmr::text
