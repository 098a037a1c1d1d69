#include "cmr/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include "cmr/errors.hpp"

namespace cmr::text {

namespace {

constexpr std::array<std::pair<std::string_view, Marker>, 10> kTags{{
    {"<title>", Marker::Title},
    {"<h1>", Marker::H1},
    {"<h2>", Marker::H2},
    {"<h3>", Marker::H3},
    {"<h4>", Marker::H4},
    {"<h5>", Marker::H5},
    {"<h6>", Marker::H6},
    {"<p>", Marker::Paragraph},
    {"<anchor>", Marker::AnchorOpen},
    {"</anchor>", Marker::AnchorClose},
}};

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Length of the tag (or separator) starting at text[pos], 0 if none.
std::size_t tag_at(std::string_view text, std::size_t pos) {
  auto matches = [&](std::string_view tag) {
    if (text.size() - pos < tag.size()) return false;
    for (std::size_t i = 0; i < tag.size(); ++i)
      if (lower(text[pos + i]) != tag[i]) return false;
    return true;
  };
  for (const auto& [tag, marker] : kTags)
    if (matches(tag)) return tag.size();
  if (matches(kTurnSeparator)) return kTurnSeparator.size();
  return 0;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
      ++i;
    } else if (c == '<' && tag_at(text, i) > 0) {
      flush();
      const std::size_t len = tag_at(text, i);
      std::string tag(text.substr(i, len));
      std::transform(tag.begin(), tag.end(), tag.begin(), lower);
      tokens.push_back(std::move(tag));
      i += len;
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
      ++i;
    } else {
      word.push_back(lower(static_cast<char>(c)));
      ++i;
    }
  }
  flush();
  return tokens;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::optional<std::string> block_tag_token(std::string_view name) {
  static const std::array<std::string_view, 8> kBlock{"title", "h1", "h2", "h3", "h4", "h5", "h6", "p"};
  if (std::find(kBlock.begin(), kBlock.end(), name) == kBlock.end()) return std::nullopt;
  return "<" + std::string(name) + ">";
}

Marker marker_of(std::string_view token) {
  for (const auto& [tag, marker] : kTags)
    if (tag == token) return marker;
  return Marker::None;
}

bool is_tag_token(std::string_view token) { return marker_of(token) != Marker::None || token == kTurnSeparator; }

Document::Document(std::vector<Tokens> sentences, std::vector<std::vector<std::string>> block_tags)
    : sentences_(std::move(sentences)), block_tags_(std::move(block_tags)) {
  if (block_tags_.empty()) block_tags_.resize(sentences_.size());
  if (block_tags_.size() != sentences_.size())
    throw DomainError("document has " + std::to_string(sentences_.size()) + " sentences but " +
                      std::to_string(block_tags_.size()) + " tag lists");
  bool anchor_open = false;
  for (std::size_t s = 0; s < sentences_.size(); ++s) {
    for (const std::string& name : block_tags_[s]) {
      auto token = block_tag_token(name);
      if (!token) throw DomainError("unknown structural tag '" + name + "' on sentence " + std::to_string(s));
      flat_.push_back(*token);
      markers_.push_back(marker_of(*token));
    }
    for (const std::string& token : sentences_[s]) {
      const Marker m = marker_of(token);
      if (m == Marker::AnchorOpen) {
        if (anchor_open) throw DomainError("nested <anchor> in sentence " + std::to_string(s));
        anchor_open = true;
      } else if (m == Marker::AnchorClose) {
        if (!anchor_open) throw DomainError("</anchor> without <anchor> in sentence " + std::to_string(s));
        anchor_open = false;
      }
      flat_.push_back(token);
      markers_.push_back(m);
    }
  }
  if (anchor_open) throw DomainError("unterminated <anchor>");
}

Tokens Document::words() const {
  Tokens out;
  for (std::size_t i = 0; i < flat_.size(); ++i)
    if (markers_[i] == Marker::None) out.push_back(flat_[i]);
  return out;
}

Tokens ConversationInstance::history_tokens() const {
  Tokens out;
  for (std::size_t t = 0; t < history.size(); ++t) {
    if (t) out.emplace_back(kTurnSeparator);
    out.insert(out.end(), history[t].begin(), history[t].end());
  }
  return out;
}

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> kReserved{
      "<pad>", "<unk>", "<bos>", "<eos>", "<title>", "<h1>", "<h2>", "<h3>",
      "<h4>",  "<h5>",  "<h6>",  "<p>",   "<anchor>", "</anchor>", "<sep>",
  };
  return kReserved;
}

Vocabulary::Vocabulary() : tokens_(reserved_tokens()) { index(); }

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin()))
    throw ParseError(0, "vocabulary does not start with the reserved tokens");
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index();
  if (v.ids_.size() != v.tokens_.size()) throw ParseError(0, "vocabulary contains duplicate tokens");
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DomainError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Vocabulary build_vocabulary(std::span<const ConversationInstance> corpus, std::size_t min_count) {
  if (min_count < 1) throw DomainError("build_vocabulary: min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  auto count = [&](const Tokens& tokens) {
    for (const auto& t : tokens) ++counts[t];
  };
  for (const auto& inst : corpus) {
    for (const auto& turn : inst.history) count(turn);
    count(inst.document.flat_tokens());
    count(inst.response);
    for (const auto& ref : inst.references) count(ref);
  }
  const auto& reserved = Vocabulary::reserved_tokens();
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, n] : counts)
    if (n >= min_count && std::find(reserved.begin(), reserved.end(), token) == reserved.end())
      kept.emplace_back(token, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved;
  for (auto& [token, n] : kept) tokens.push_back(token);
  return Vocabulary::from_tokens(std::move(tokens));
}

}  // namespace cmr::text
