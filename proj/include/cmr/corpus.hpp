#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmr/text.hpp"

namespace cmr::text {

struct TruncationLimits {
  std::size_t turn = 30;
  std::size_t response = 30;
  std::size_t document = 500;
};

struct LoadOptions {
  TruncationLimits limits;
  // Records with any turn (or the response) shorter than this are dropped.
  std::size_t min_turn_length = 1;
  // Drop records containing "[deleted]" / "[removed]" turns.
  bool drop_redacted = true;
  // Drop records whose turns quote an earlier turn (Reddit "> ..." lines).
  bool drop_quotes = true;
};

struct LoadStats {
  std::size_t records = 0;
  std::size_t kept = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_redacted = 0;
  std::size_t dropped_quotes = 0;
};

/// Parses one JSON-lines record. Returns nullopt when a filter rejects it.
/// Throws ParseError naming the line and offending field on schema errors.
std::optional<ConversationInstance> parse_record(std::string_view line, std::size_t line_number,
                                                 const LoadOptions& options = {}, LoadStats* stats = nullptr);
std::string serialize_record(const ConversationInstance& instance);

/// Streaming reader over a corpus file.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path, LoadOptions options = {});
  std::optional<ConversationInstance> next();
  const LoadStats& stats() const { return stats_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  LoadOptions options_;
  LoadStats stats_;
  std::size_t line_ = 0;
};

std::vector<ConversationInstance> load_corpus(const std::filesystem::path& path, const LoadOptions& options = {},
                                              LoadStats* stats = nullptr);
void write_corpus(const std::filesystem::path& path, std::span<const ConversationInstance> instances);

// Keeps the first `limit` tokens of every field. Document truncation never
// leaves an anchor open: a cut inside an anchor closes it within the limit.
Tokens truncate_tokens(Tokens tokens, std::size_t limit);
Document truncate_document(const Document& document, std::size_t limit);
void truncate_instance(ConversationInstance& instance, const TruncationLimits& limits);

struct HeldOutResponse {
  std::string id;
  Tokens response;
};

struct MultiReferenceSet {
  // One instance per kept group: refs hold the 5 references, response holds
  // the held-out human response.
  std::vector<ConversationInstance> eval_set;
  std::vector<HeldOutResponse> human;
  std::size_t dropped_groups = 0;
};

inline constexpr std::size_t kMultiReferenceCount = 5;

/// Groups instances by (history, document). Groups with at least 6 responses
/// keep the 5 lexicographically smallest ids as references and the next id
/// as the held-out human response; smaller groups are dropped.
MultiReferenceSet make_multi_reference_testset(std::span<const ConversationInstance> instances);

/// Dataset statistics: dialogues, utterances, documents, sentences, lengths.
struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t utterances = 0;
  std::size_t documents = 0;
  std::size_t document_sentences = 0;
  double average_utterance_length = 0.0;
  double average_document_sentence_length = 0.0;
};

CorpusStats compute_stats(std::span<const ConversationInstance> instances);

}  // namespace cmr::text
