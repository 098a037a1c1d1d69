#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cmr/text.hpp"

namespace cmr::text {

/// Desk-scale stand-in for the crawled corpus. Documents carry rare
/// alphanumeric "fact" tokens inside anchors; grounded responses copy some of
/// them, ungrounded responses use only chat words, stopwords and the topic
/// word already present in the history.
struct SyntheticConfig {
  std::size_t contexts = 100;  // distinct (history, document) pairs
  std::size_t responses_per_context = 1;
  std::uint64_t seed = 1;
  double grounding_rate = 1.0;
  std::size_t fact_pool = 16;  // at most fact_pool_limit()
  std::size_t facts_per_document = 2;
  std::size_t document_sentences = 2;
  std::size_t sentence_length = 3;
  std::size_t history_turns = 2;
  std::size_t max_chat_words = 1;  // per response, before/after the facts
};

std::size_t fact_pool_limit();
// The fixed fact vocabulary; the first `n` entries form the pool.
std::vector<std::string> fact_tokens(std::size_t n);

/// Deterministic per seed. Throws DomainError on a grounding rate outside
/// [0,1] or non-positive sizes.
std::vector<ConversationInstance> generate_synthetic_corpus(const SyntheticConfig& config);

}  // namespace cmr::text
