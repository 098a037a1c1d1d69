#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>

namespace cmr::text {

/// Lowercase, deduplicated stopword set with an identifier for reports.
class StopwordList {
 public:
  // The English list bundled with the library.
  static const StopwordList& english();
  // One word per line; blank lines and lines starting with '#' are ignored.
  static StopwordList load(const std::filesystem::path& path);

  bool contains(std::string_view token) const { return words_.count(std::string(token)) > 0; }
  std::size_t size() const { return words_.size(); }
  const std::string& source() const { return source_; }
  // FNV-1a 64 over the sorted words joined by newlines, as 16 hex digits.
  std::string hash() const;

  StopwordList() = default;
  StopwordList(std::unordered_set<std::string> words, std::string source);

 private:
  std::unordered_set<std::string> words_;
  std::string source_;
};

// True for tokens consisting only of ASCII punctuation.
bool is_punctuation(std::string_view token);

}  // namespace cmr::text
