#include <cmath>
#include <map>

#include "cmr/errors.hpp"
#include "cmr/trainer.hpp"

namespace cmr::train {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, std::size_t> count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  std::map<Gram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Gram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

// Clipped matches of response n-grams against the document.
std::size_t clipped_matches(const std::map<Gram, std::size_t>& response, const std::map<Gram, std::size_t>& document) {
  std::size_t matched = 0;
  for (const auto& [gram, n] : response) {
    auto it = document.find(gram);
    if (it != document.end()) matched += std::min(n, it->second);
  }
  return matched;
}

double bleu2(std::span<const std::string> doc, std::span<const std::string> response) {
  const double p1 = double(clipped_matches(count_ngrams(response, 1), count_ngrams(doc, 1))) / double(response.size());
  const std::size_t total2 = response.size() - 1;
  const double p2 = double(clipped_matches(count_ngrams(response, 2), count_ngrams(doc, 2)) + 1) / double(total2 + 1);
  return std::sqrt(p1 * p2);
}

double nist_like(std::span<const std::string> doc, std::span<const std::string> response) {
  constexpr std::size_t kMaxN = 5;
  std::vector<std::map<Gram, std::size_t>> doc_counts(kMaxN + 1);
  for (std::size_t n = 1; n <= kMaxN; ++n) doc_counts[n] = count_ngrams(doc, n);
  double score = 0.0;
  for (std::size_t n = 1; n <= kMaxN && n <= response.size(); ++n) {
    double info_sum = 0.0;
    for (const auto& [gram, count] : count_ngrams(response, n)) {
      auto it = doc_counts[n].find(gram);
      if (it == doc_counts[n].end()) continue;
      const double prefix = n == 1 ? double(doc.size())
                                   : double(doc_counts[n - 1].at(Gram(gram.begin(), gram.end() - 1)));
      info_sum += double(std::min(count, it->second)) * std::log2(prefix / double(it->second));
    }
    score += info_sum / double(response.size() - n + 1);
  }
  return score;
}

}  // namespace

ClosenessMetric parse_closeness(std::string_view name) {
  if (name == "bleu-2") return ClosenessMetric::Bleu2;
  if (name == "nist-like") return ClosenessMetric::NistLike;
  throw ConfigError("unknown closeness metric '" + std::string(name) + "' (expected bleu-2 or nist-like)");
}

std::string closeness_name(ClosenessMetric metric) {
  return metric == ClosenessMetric::Bleu2 ? "bleu-2" : "nist-like";
}

double closeness_score(const text::Document& document, std::span<const std::string> response,
                       ClosenessMetric metric) {
  const auto& doc = document.flat_tokens();
  if (doc.empty() || response.empty()) return 0.0;
  return metric == ClosenessMetric::Bleu2 ? bleu2(doc, response) : nist_like(doc, response);
}

std::vector<double> normalize_weights(std::span<const double> closeness) {
  if (closeness.empty()) throw DomainError("normalize_weights: empty batch");
  double total = 0.0;
  for (double c : closeness) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("closeness scores must be finite and non-negative");
    total += c;
  }
  std::vector<double> w(closeness.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = total > 0.0 ? closeness[i] / total : 1.0 / double(closeness.size());
  return w;
}

WeightedBatch weight_batch(std::span<const text::ConversationInstance* const> batch, ClosenessMetric metric) {
  if (batch.empty()) throw DomainError("weight_batch: empty batch");
  WeightedBatch out;
  out.instances.assign(batch.begin(), batch.end());
  for (const auto* inst : batch) out.closeness.push_back(closeness_score(inst->document, inst->response, metric));
  out.weights = normalize_weights(out.closeness);
  return out;
}

}  // namespace cmr::train
