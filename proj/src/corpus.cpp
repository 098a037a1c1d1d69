#include "cmr/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cmr/errors.hpp"
#include "json.hpp"

namespace cmr::text {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool is_redacted(std::string_view raw) {
  const std::string t = trim(raw);
  return t == "[deleted]" || t == "[removed]";
}

bool is_quote(std::string_view raw) {
  const std::string t = trim(raw);
  return t.starts_with(">") || t.starts_with("&gt;");
}

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + field + "'");
  return *it;
}

std::string require_string(const json& value, const std::string& field, std::size_t line) {
  if (!value.is_string()) throw ParseError(line, "field '" + field + "' must be a string");
  return value.get<std::string>();
}

std::vector<std::string> require_strings(const json& value, const std::string& field, std::size_t line) {
  if (!value.is_array()) throw ParseError(line, "field '" + field + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : value) out.push_back(require_string(item, field, line));
  return out;
}

}  // namespace

std::optional<ConversationInstance> parse_record(std::string_view line, std::size_t line_number,
                                                 const LoadOptions& options, LoadStats* stats) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!record.is_object()) throw ParseError(line_number, "record must be a JSON object");
  if (stats) ++stats->records;

  ConversationInstance inst;
  inst.id = require_string(require(record, "id", line_number), "id", line_number);
  const auto raw_history = require_strings(require(record, "history", line_number), "history", line_number);
  if (raw_history.empty()) throw ParseError(line_number, "field 'history' must hold at least one turn");
  const json& doc = require(record, "doc", line_number);
  if (!doc.is_object()) throw ParseError(line_number, "field 'doc' must be an object");
  const auto raw_sentences = require_strings(require(doc, "sentences", line_number), "doc.sentences", line_number);
  std::vector<std::vector<std::string>> tags;
  if (auto it = doc.find("tags"); it != doc.end()) {
    if (!it->is_array()) throw ParseError(line_number, "field 'doc.tags' must be an array of string arrays");
    for (const auto& entry : *it) tags.push_back(require_strings(entry, "doc.tags", line_number));
    if (tags.size() != raw_sentences.size())
      throw ParseError(line_number, "field 'doc.tags' has " + std::to_string(tags.size()) + " entries for " +
                                        std::to_string(raw_sentences.size()) + " sentences");
  }
  const std::string raw_response = require_string(require(record, "response", line_number), "response", line_number);
  std::vector<std::string> raw_refs;
  if (auto it = record.find("refs"); it != record.end()) raw_refs = require_strings(*it, "refs", line_number);

  auto reject = [&](std::size_t LoadStats::*counter) -> std::optional<ConversationInstance> {
    if (stats) ++(stats->*counter);
    return std::nullopt;
  };
  if (options.drop_redacted &&
      (is_redacted(raw_response) || std::any_of(raw_history.begin(), raw_history.end(), is_redacted)))
    return reject(&LoadStats::dropped_redacted);
  if (options.drop_quotes && (is_quote(raw_response) || std::any_of(raw_history.begin(), raw_history.end(), is_quote)))
    return reject(&LoadStats::dropped_quotes);

  for (const auto& turn : raw_history) inst.history.push_back(tokenize(turn));
  inst.response = tokenize(raw_response);
  for (const auto& ref : raw_refs) inst.references.push_back(tokenize(ref));
  const bool short_turn = std::any_of(inst.history.begin(), inst.history.end(),
                                      [&](const Tokens& t) { return t.size() < options.min_turn_length; });
  if (short_turn || inst.response.size() < std::max<std::size_t>(options.min_turn_length, 1))
    return reject(&LoadStats::dropped_short);

  std::vector<Tokens> sentences;
  for (const auto& s : raw_sentences) sentences.push_back(tokenize(s));
  try {
    inst.document = Document(std::move(sentences), std::move(tags));
  } catch (const DomainError& e) {
    throw ParseError(line_number, std::string("field 'doc': ") + e.what());
  }
  truncate_instance(inst, options.limits);
  if (stats) ++stats->kept;
  return inst;
}

std::string serialize_record(const ConversationInstance& instance) {
  ordered_json record;
  record["id"] = instance.id;
  ordered_json history = ordered_json::array();
  for (const auto& turn : instance.history) history.push_back(join(turn));
  record["history"] = std::move(history);
  ordered_json sentences = ordered_json::array();
  for (const auto& s : instance.document.sentences()) sentences.push_back(join(s));
  ordered_json tags = ordered_json::array();
  for (const auto& t : instance.document.block_tags()) tags.push_back(t);
  record["doc"] = ordered_json{{"sentences", std::move(sentences)}, {"tags", std::move(tags)}};
  record["response"] = join(instance.response);
  ordered_json refs = ordered_json::array();
  for (const auto& r : instance.references) refs.push_back(join(r));
  record["refs"] = std::move(refs);
  return record.dump();
}

CorpusReader::CorpusReader(const std::filesystem::path& path, LoadOptions options)
    : path_(path), in_(path), options_(std::move(options)) {
  if (!in_) throw IoError("cannot read corpus file " + path.string());
}

std::optional<ConversationInstance> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (trim(line).empty()) continue;
    if (auto inst = parse_record(line, line_, options_, &stats_)) return inst;
  }
  if (in_.bad()) throw IoError("read failure in " + path_.string() + " after line " + std::to_string(line_));
  return std::nullopt;
}

std::vector<ConversationInstance> load_corpus(const std::filesystem::path& path, const LoadOptions& options,
                                              LoadStats* stats) {
  CorpusReader reader(path, options);
  std::vector<ConversationInstance> out;
  while (auto inst = reader.next()) out.push_back(std::move(*inst));
  if (stats) *stats = reader.stats();
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const ConversationInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const auto& inst : instances) out << serialize_record(inst) << '\n';
  if (!out) throw IoError("write failure in " + path.string());
}

Tokens truncate_tokens(Tokens tokens, std::size_t limit) {
  if (tokens.size() > limit) tokens.resize(limit);
  return tokens;
}

Document truncate_document(const Document& document, std::size_t limit) {
  if (document.size() <= limit) return document;
  std::vector<Tokens> sentences;
  std::vector<std::vector<std::string>> tags;
  std::size_t used = 0;
  bool anchor_open = false;
  for (std::size_t s = 0; s < document.sentences().size(); ++s) {
    const auto& block = document.block_tags()[s];
    const auto& words = document.sentences()[s];
    // A sentence is only started when its tags and one token fit.
    if (used + block.size() + 1 > limit) break;
    used += block.size();
    Tokens kept;
    for (const auto& token : words) {
      if (used == limit) break;
      kept.push_back(token);
      ++used;
      const Marker m = marker_of(token);
      if (m == Marker::AnchorOpen) anchor_open = true;
      if (m == Marker::AnchorClose) anchor_open = false;
    }
    sentences.push_back(std::move(kept));
    tags.push_back(block);
    if (used == limit) break;
  }
  if (anchor_open) {
    auto it = std::find_if(sentences.rbegin(), sentences.rend(), [](const Tokens& t) { return !t.empty(); });
    Tokens& last = *it;
    if (marker_of(last.back()) == Marker::AnchorOpen)
      last.pop_back();
    else
      last.back() = std::string(kAnchorClose);
  }
  return Document(std::move(sentences), std::move(tags));
}

void truncate_instance(ConversationInstance& instance, const TruncationLimits& limits) {
  for (auto& turn : instance.history) turn = truncate_tokens(std::move(turn), limits.turn);
  instance.response = truncate_tokens(std::move(instance.response), limits.response);
  for (auto& ref : instance.references) ref = truncate_tokens(std::move(ref), limits.response);
  instance.document = truncate_document(instance.document, limits.document);
}

MultiReferenceSet make_multi_reference_testset(std::span<const ConversationInstance> instances) {
  // Key: serialized history + document.
  std::map<std::string, std::vector<const ConversationInstance*>> groups;
  for (const auto& inst : instances) {
    std::string key;
    for (const auto& turn : inst.history) key += join(turn) + '\x1f';
    key += '\x1e';
    key += join(inst.document.flat_tokens());
    groups[key].push_back(&inst);
  }
  std::vector<std::vector<const ConversationInstance*>> kept;
  MultiReferenceSet out;
  for (auto& [key, members] : groups) {
    if (members.size() < kMultiReferenceCount + 1) {
      ++out.dropped_groups;
      continue;
    }
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->id < b->id; });
    kept.push_back(std::move(members));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.front()->id < b.front()->id; });
  for (const auto& members : kept) {
    ConversationInstance inst = *members.front();
    inst.references.clear();
    for (std::size_t i = 0; i < kMultiReferenceCount; ++i) inst.references.push_back(members[i]->response);
    inst.response = members[kMultiReferenceCount]->response;
    out.human.push_back({inst.id, inst.response});
    out.eval_set.push_back(std::move(inst));
  }
  return out;
}

CorpusStats compute_stats(std::span<const ConversationInstance> instances) {
  CorpusStats stats;
  std::set<std::string> dialogues;
  std::set<std::string> documents;
  std::size_t utterance_tokens = 0, sentence_tokens = 0;
  for (const auto& inst : instances) {
    const std::string doc_key = join(inst.document.flat_tokens());
    dialogues.insert(join(inst.history.front()) + '\x1e' + doc_key);
    if (documents.insert(doc_key).second) {
      for (const auto& s : inst.document.sentences()) {
        ++stats.document_sentences;
        sentence_tokens += static_cast<std::size_t>(
            std::count_if(s.begin(), s.end(), [](const std::string& t) { return !is_tag_token(t); }));
      }
    }
    ++stats.utterances;
    utterance_tokens += inst.response.size();
  }
  stats.dialogues = dialogues.size();
  stats.documents = documents.size();
  if (stats.utterances) stats.average_utterance_length = double(utterance_tokens) / double(stats.utterances);
  if (stats.document_sentences)
    stats.average_document_sentence_length = double(sentence_tokens) / double(stats.document_sentences);
  return stats;
}

}  // namespace cmr::text
