#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cmr::text {

using Tokens = std::vector<std::string>;

/// Lowercases ASCII letters, splits on whitespace and makes every ASCII
/// punctuation character its own token. Structural tags such as <h1> and
/// </anchor> survive as single tokens.
Tokens tokenize(std::string_view text);
std::string join(std::span<const std::string> tokens);

// Structural marker of a flat document token.
enum class Marker { None, Title, H1, H2, H3, H4, H5, H6, Paragraph, AnchorOpen, AnchorClose };

inline constexpr std::string_view kAnchorOpen = "<anchor>";
inline constexpr std::string_view kAnchorClose = "</anchor>";
inline constexpr std::string_view kTurnSeparator = "<sep>";

// "title" -> "<title>", etc. Only block tags are accepted.
std::optional<std::string> block_tag_token(std::string_view name);
Marker marker_of(std::string_view token);
bool is_tag_token(std::string_view token);

/// Web document D = (s_1, ..., s_N). Each sentence carries zero or more block
/// tags (title, h1..h6, p) that precede it in the flat sequence; anchor tags
/// appear inline inside sentences.
class Document {
 public:
  Document() = default;
  // Throws DomainError on unknown block tags or unbalanced/nested anchors.
  Document(std::vector<Tokens> sentences, std::vector<std::vector<std::string>> block_tags);

  const std::vector<Tokens>& sentences() const { return sentences_; }
  const std::vector<std::vector<std::string>>& block_tags() const { return block_tags_; }
  const Tokens& flat_tokens() const { return flat_; }
  const std::vector<Marker>& markers() const { return markers_; }
  std::size_t size() const { return flat_.size(); }
  bool empty() const { return flat_.empty(); }
  // Flat tokens with structural tags removed.
  Tokens words() const;

  bool operator==(const Document& other) const {
    return sentences_ == other.sentences_ && block_tags_ == other.block_tags_;
  }

 private:
  std::vector<Tokens> sentences_;
  std::vector<std::vector<std::string>> block_tags_;
  Tokens flat_;
  std::vector<Marker> markers_;
};

/// One (history X, document D, response y) record.
struct ConversationInstance {
  std::string id;
  std::vector<Tokens> history;
  Document document;
  Tokens response;
  std::vector<Tokens> references;

  // History turns joined with the turn separator token.
  Tokens history_tokens() const;
  bool operator==(const ConversationInstance&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  // Reserved tokens only.
  Vocabulary();
  // Rebuilds a vocabulary from its id-ordered token list. The reserved
  // prefix must be intact.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static const std::vector<std::string>& reserved_tokens();

  // Unknown tokens map to kUnk.
  int id(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const int> ids) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t reserved_count() const { return reserved_tokens().size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Every token with frequency >= min_count, ordered by frequency descending
/// then lexicographically, after the reserved block.
Vocabulary build_vocabulary(std::span<const ConversationInstance> corpus, std::size_t min_count);

}  // namespace cmr::text
