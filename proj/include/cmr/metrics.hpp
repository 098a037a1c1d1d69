#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmr/stopwords.hpp"
#include "cmr/text.hpp"

namespace cmr::eval {

using text::Tokens;

struct EvalInstance {
  std::string id;
  Tokens hypothesis;
  std::vector<Tokens> references;  // 1..5
  text::Document document;
  Tokens context;  // every history token
};

/// Corpus BLEU-4: clipped n-gram precisions (n = 1..4, clip by the max count
/// in any reference), geometric mean, brevity penalty against the closest
/// reference length (shorter on ties). 0 when any precision is 0.
double bleu4(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references);

/// NIST with information weights estimated from all reference n-grams of the
/// corpus, n = 1..max_n, and the NIST brevity factor (0.5 at a 2/3 length
/// ratio) on total hypothesis length over total mean reference length.
double nist(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references,
            std::size_t max_n = 5);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

/// Exact-match METEOR: hypothesis tokens are aligned left to right to the
/// leftmost unused equal reference token. Best score over the references.
double meteor_variant(const Tokens& hypothesis, std::span<const Tokens> references, const MeteorParams& params = {});
double meteor_single(const Tokens& hypothesis, const Tokens& reference, const MeteorParams& params = {});

struct DiversityScore {
  double entropy = 0.0;  // natural log
  double distinct = 0.0;
  std::size_t total = 0;
  std::size_t types = 0;
  bool empty = false;  // no n-grams at all; both scores reported as 0
};

/// n-grams are counted within each output and pooled over all outputs.
DiversityScore diversity(std::span<const Tokens> outputs, std::size_t n);

struct GroundingScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t match = 0;               // distinct matching types
  std::size_t hypothesis_content = 0;  // content tokens (occurrences) in the hypothesis
  std::size_t document_content = 0;    // content tokens (occurrences) in the document
  bool empty_hypothesis = false;
};

// Content tokens: not a stopword, not punctuation, not a structural tag.
bool is_content_token(std::string_view token, const text::StopwordList& stopwords);

/// #match counts hypothesis content types that occur in the document and not
/// in the context.
GroundingScore grounding(const Tokens& hypothesis, const text::Document& document, const Tokens& context,
                         const text::StopwordList& stopwords);

struct InstanceScores {
  std::string id;
  std::size_t length = 0;
  double meteor = 0.0;
  GroundingScore grounding;
};

struct MetricReport {
  // corpus aggregates, in the order of the results table
  double nist = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;  // mean of per-instance scores
  double grounding_precision = 0.0;  // mean over instances
  double grounding_recall = 0.0;     // mean over instances
  double grounding_f1 = 0.0;         // harmonic mean of the two means
  double entropy[4] = {0, 0, 0, 0};  // entropy-1..4
  double distinct[2] = {0, 0};       // distinct-1, distinct-2
  double length = 0.0;               // mean hypothesis length in tokens
  std::vector<std::string> flags;    // degenerate-case notes

  std::vector<InstanceScores> instances;

  std::string config_hash;
  std::string stopword_source;
  std::string stopword_hash;
};

struct EvalOptions {
  const text::StopwordList* stopwords = nullptr;  // default: the bundled English list
  std::string config_hash;                          // recorded verbatim
};

MetricReport evaluate_corpus(std::span<const EvalInstance> instances, const EvalOptions& options = {});
std::string report_to_json(const MetricReport& report);

struct SystemOutput {
  std::string id;
  Tokens tokens;
};

/// Pairs test instances with outputs by position. Throws DomainError naming
/// the offending ids when counts or ids disagree. Instances without a
/// reference set use their own response as the single reference.
std::vector<EvalInstance> align_outputs(std::span<const text::ConversationInstance> testset,
                                        std::span<const SystemOutput> outputs);

// "id<TAB>tokens" lines, as written by the generate command.
std::vector<SystemOutput> read_outputs(const std::string& path);
void write_outputs(const std::string& path, std::span<const SystemOutput> outputs);

// FNV-1a 64 as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

// Metric names accepted by paired_bootstrap: bleu4, nist, meteor,
// grounding_f1, grounding_precision, grounding_recall, distinct-1,
// distinct-2, entropy-4, length.
const std::vector<std::string>& bootstrap_metric_names();

struct BootstrapResult {
  std::string metric;
  double score_a = 0.0;
  double score_b = 0.0;
  std::size_t replicates = 0;
  std::size_t a_wins = 0;
  std::size_t b_wins = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // two-sided
};

/// Paired bootstrap: both systems are scored on the same resampled instance
/// indices in every replicate. NIST keeps the information weights of the
/// full reference corpus across replicates.
BootstrapResult paired_bootstrap(std::span<const EvalInstance> system_a, std::span<const EvalInstance> system_b,
                                 const std::string& metric, std::size_t replicates, std::uint64_t seed,
                                 const text::StopwordList& stopwords = text::StopwordList::english());

}  // namespace cmr::eval
