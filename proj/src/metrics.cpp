#include "cmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cmr/errors.hpp"
#include "cmr/random.hpp"
#include "json.hpp"

namespace cmr::eval {

namespace {

using Gram = std::vector<std::string>;
using GramCounts = std::map<Gram, std::size_t>;

GramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  GramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Gram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

// Max count of every n-gram over a reference set.
GramCounts max_reference_counts(const std::vector<Tokens>& refs, std::size_t n) {
  GramCounts out;
  for (const auto& r : refs)
    for (const auto& [g, c] : ngram_counts(r, n)) {
      auto& slot = out[g];
      slot = std::max(slot, c);
    }
  return out;
}

std::size_t ngram_total(std::size_t length, std::size_t n) { return length >= n ? length - n + 1 : 0; }

void check_corpus(std::span<const Tokens> hyps, std::span<const std::vector<Tokens>> refs, const char* what) {
  if (hyps.empty()) throw DomainError(std::string(what) + ": empty corpus");
  if (hyps.size() != refs.size())
    throw DomainError(std::string(what) + ": " + std::to_string(hyps.size()) + " hypotheses but " +
                      std::to_string(refs.size()) + " reference sets");
  for (std::size_t i = 0; i < refs.size(); ++i)
    if (refs[i].empty()) throw DomainError(std::string(what) + ": segment " + std::to_string(i) + " has no reference");
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double bleu4(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references) {
  check_corpus(hypotheses, references, "bleu4");
  constexpr std::size_t kMaxN = 4;
  std::size_t matched[kMaxN + 1] = {}, total[kMaxN + 1] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& refs = references[s];
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto clip = max_reference_counts(refs, n);
      for (const auto& [g, c] : ngram_counts(hyp, n)) {
        auto it = clip.find(g);
        if (it != clip.end()) matched[n] += std::min(c, it->second);
      }
      total[n] += ngram_total(hyp.size(), n);
    }
    hyp_len += hyp.size();
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
      if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
    }
    ref_len += closest;
  }
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(double(matched[n]) / double(total[n]));
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(hyp_len));
  return bp * std::exp(log_sum / double(kMaxN));
}

double nist(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references, std::size_t max_n) {
  check_corpus(hypotheses, references, "nist");
  if (max_n == 0) throw DomainError("nist: max_n must be positive");
  // information weights from every reference segment of the corpus
  std::map<Gram, std::size_t> counts;
  std::size_t reference_words = 0;
  for (const auto& refs : references)
    for (const auto& r : refs) {
      reference_words += r.size();
      for (std::size_t n = 1; n <= max_n; ++n)
        for (const auto& [g, c] : ngram_counts(r, n)) counts[g] += c;
    }
  auto info = [&](const Gram& g) {
    const double count = double(counts.at(g));
    const double context = g.size() == 1 ? double(reference_words) : double(counts.at(Gram(g.begin(), g.end() - 1)));
    return std::log2(context / count);
  };

  std::vector<double> info_sum(max_n + 1, 0.0);
  std::vector<std::size_t> hyp_total(max_n + 1, 0);
  double hyp_words = 0.0, ref_words = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& refs = references[s];
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto clip = max_reference_counts(refs, n);
      for (const auto& [g, c] : ngram_counts(hyp, n)) {
        auto it = clip.find(g);
        if (it != clip.end()) info_sum[n] += info(g) * double(std::min(c, it->second));
      }
      hyp_total[n] += ngram_total(hyp.size(), n);
    }
    hyp_words += double(hyp.size());
    double mean_ref = 0.0;
    for (const auto& r : refs) mean_ref += double(r.size());
    ref_words += mean_ref / double(refs.size());
  }
  double score = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) score += info_sum[n] / double(std::max<std::size_t>(hyp_total[n], 1));

  const double ratio = ref_words > 0.0 ? hyp_words / ref_words : 0.0;
  double penalty = 1.0;
  if (ratio <= 0.0) penalty = 0.0;
  else if (ratio < 1.0) {
    const double beta = -std::log(0.5) / (std::log(1.5) * std::log(1.5));
    penalty = std::exp(-beta * std::log(ratio) * std::log(ratio));
  }
  return score * penalty;
}

double meteor_single(const Tokens& hypothesis, const Tokens& reference, const MeteorParams& params) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  std::vector<bool> used(reference.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> alignment;  // (hyp, ref), increasing hyp
  for (std::size_t i = 0; i < hypothesis.size(); ++i)
    for (std::size_t j = 0; j < reference.size(); ++j)
      if (!used[j] && reference[j] == hypothesis[i]) {
        used[j] = true;
        alignment.emplace_back(i, j);
        break;
      }
  const double m = double(alignment.size());
  if (m == 0.0) return 0.0;
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < alignment.size(); ++k)
    if (alignment[k].first != alignment[k - 1].first + 1 || alignment[k].second != alignment[k - 1].second + 1)
      ++chunks;
  const double p = m / double(hypothesis.size());
  const double r = m / double(reference.size());
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(double(chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

double meteor_variant(const Tokens& hypothesis, std::span<const Tokens> references, const MeteorParams& params) {
  if (references.empty()) throw DomainError("meteor: no references");
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, meteor_single(hypothesis, r, params));
  return best;
}

DiversityScore diversity(std::span<const Tokens> outputs, std::size_t n) {
  if (n == 0) throw DomainError("diversity: n must be positive");
  GramCounts counts;
  DiversityScore out;
  for (const auto& o : outputs)
    for (const auto& [g, c] : ngram_counts(o, n)) {
      counts[g] += c;
      out.total += c;
    }
  out.types = counts.size();
  if (out.total == 0) {
    out.empty = true;
    return out;
  }
  for (const auto& [g, c] : counts) {
    const double p = double(c) / double(out.total);
    out.entropy -= p * std::log(p);
  }
  out.distinct = double(out.types) / double(out.total);
  return out;
}

bool is_content_token(std::string_view token, const text::StopwordList& stopwords) {
  return !token.empty() && !stopwords.contains(token) && !text::is_punctuation(token) && !text::is_tag_token(token);
}

GroundingScore grounding(const Tokens& hypothesis, const text::Document& document, const Tokens& context,
                         const text::StopwordList& stopwords) {
  GroundingScore s;
  std::unordered_set<std::string> doc_types, context_types(context.begin(), context.end()), matched;
  for (const auto& t : document.flat_tokens())
    if (is_content_token(t, stopwords)) {
      ++s.document_content;
      doc_types.insert(t);
    }
  for (const auto& t : hypothesis) {
    if (!is_content_token(t, stopwords)) continue;
    ++s.hypothesis_content;
    if (doc_types.count(t) && !context_types.count(t)) matched.insert(t);
  }
  s.match = matched.size();
  s.empty_hypothesis = s.hypothesis_content == 0;
  s.precision = s.hypothesis_content ? double(s.match) / double(s.hypothesis_content) : 0.0;
  s.recall = s.document_content ? double(s.match) / double(s.document_content) : 0.0;
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

namespace {

std::vector<Tokens> hypotheses_of(std::span<const EvalInstance> instances) {
  std::vector<Tokens> out;
  out.reserve(instances.size());
  for (const auto& i : instances) out.push_back(i.hypothesis);
  return out;
}

std::vector<std::vector<Tokens>> references_of(std::span<const EvalInstance> instances) {
  std::vector<std::vector<Tokens>> out;
  out.reserve(instances.size());
  for (const auto& i : instances) out.push_back(i.references);
  return out;
}

}  // namespace

MetricReport evaluate_corpus(std::span<const EvalInstance> instances, const EvalOptions& options) {
  if (instances.empty()) throw DomainError("evaluate_corpus: no instances");
  const auto& stop = options.stopwords ? *options.stopwords : text::StopwordList::english();
  for (const auto& inst : instances)
    if (inst.references.empty()) throw DomainError("instance '" + inst.id + "' has no reference");

  MetricReport report;
  report.config_hash = options.config_hash;
  report.stopword_source = stop.source();
  report.stopword_hash = stop.hash();

  const auto hyps = hypotheses_of(instances);
  const auto refs = references_of(instances);
  report.bleu4 = bleu4(hyps, refs);
  report.nist = nist(hyps, refs);

  double meteor_sum = 0.0, p_sum = 0.0, r_sum = 0.0, len_sum = 0.0;
  std::size_t empty_hyps = 0;
  for (const auto& inst : instances) {
    InstanceScores row;
    row.id = inst.id;
    row.length = inst.hypothesis.size();
    row.meteor = meteor_variant(inst.hypothesis, inst.references);
    row.grounding = grounding(inst.hypothesis, inst.document, inst.context, stop);
    meteor_sum += row.meteor;
    p_sum += row.grounding.precision;
    r_sum += row.grounding.recall;
    len_sum += double(row.length);
    if (row.grounding.empty_hypothesis) ++empty_hyps;
    report.instances.push_back(std::move(row));
  }
  const double count = double(instances.size());
  report.meteor = meteor_sum / count;
  report.grounding_precision = p_sum / count;
  report.grounding_recall = r_sum / count;
  report.grounding_f1 = harmonic(report.grounding_precision, report.grounding_recall);
  report.length = len_sum / count;
  if (empty_hyps)
    report.flags.push_back(std::to_string(empty_hyps) + " hypotheses without content tokens (precision set to 0)");

  for (std::size_t n = 1; n <= 4; ++n) {
    const auto d = diversity(hyps, n);
    report.entropy[n - 1] = d.entropy;
    if (n <= 2) report.distinct[n - 1] = d.distinct;
    if (d.empty) report.flags.push_back("no " + std::to_string(n) + "-grams in the outputs (entropy/distinct set to 0)");
  }
  return report;
}

std::string report_to_json(const MetricReport& r) {
  using ordered_json = nlohmann::ordered_json;
  ordered_json j;
  ordered_json meta;
  meta["config_hash"] = r.config_hash;
  meta["stopword_source"] = r.stopword_source;
  meta["stopword_hash"] = r.stopword_hash;
  meta["entropy_base"] = "e";
  meta["meteor"] = "exact-match alignment only, no stemming or synonym modules";
  meta["grounding_match"] = "type-level";
  meta["instances"] = r.instances.size();
  meta["flags"] = r.flags;
  j["metadata"] = std::move(meta);

  ordered_json corpus;
  corpus["NIST"] = r.nist;
  corpus["BLEU"] = r.bleu4;
  corpus["METEOR"] = r.meteor;
  corpus["Precision"] = r.grounding_precision;
  corpus["Recall"] = r.grounding_recall;
  corpus["F1"] = r.grounding_f1;
  corpus["Entropy-4"] = r.entropy[3];
  corpus["Distinct-1"] = r.distinct[0];
  corpus["Distinct-2"] = r.distinct[1];
  corpus["Len"] = r.length;
  j["corpus"] = std::move(corpus);

  ordered_json extra;
  extra["Entropy-1"] = r.entropy[0];
  extra["Entropy-2"] = r.entropy[1];
  extra["Entropy-3"] = r.entropy[2];
  j["entropy_n"] = std::move(extra);

  ordered_json rows = ordered_json::array();
  for (const auto& row : r.instances) {
    ordered_json o;
    o["id"] = row.id;
    o["Len"] = row.length;
    o["METEOR"] = row.meteor;
    o["Precision"] = row.grounding.precision;
    o["Recall"] = row.grounding.recall;
    o["F1"] = row.grounding.f1;
    o["match"] = row.grounding.match;
    o["hypothesis_content"] = row.grounding.hypothesis_content;
    o["document_content"] = row.grounding.document_content;
    rows.push_back(std::move(o));
  }
  j["instances"] = std::move(rows);
  return j.dump(2);
}

std::vector<EvalInstance> align_outputs(std::span<const text::ConversationInstance> testset,
                                        std::span<const SystemOutput> outputs) {
  const std::size_t k = std::min(testset.size(), outputs.size());
  for (std::size_t i = 0; i < k; ++i)
    if (testset[i].id != outputs[i].id)
      throw DomainError("output " + std::to_string(i) + " has id '" + outputs[i].id + "', expected '" +
                        testset[i].id + "'");
  if (testset.size() != outputs.size()) {
    std::string msg = "test set has " + std::to_string(testset.size()) + " instances but there are " +
                      std::to_string(outputs.size()) + " outputs";
    if (k < testset.size()) msg += "; first instance without output: '" + testset[k].id + "'";
    if (k < outputs.size()) msg += "; first output without instance: '" + outputs[k].id + "'";
    throw DomainError(msg);
  }
  std::vector<EvalInstance> out;
  out.reserve(testset.size());
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const auto& inst = testset[i];
    EvalInstance e;
    e.id = inst.id;
    e.hypothesis = outputs[i].tokens;
    e.references = inst.references.empty() ? std::vector<Tokens>{inst.response} : inst.references;
    e.document = inst.document;
    for (const auto& turn : inst.history) e.context.insert(e.context.end(), turn.begin(), turn.end());
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<SystemOutput> read_outputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read outputs " + path);
  std::vector<SystemOutput> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError(n, "expected 'id<TAB>response' in " + path);
    SystemOutput o;
    o.id = line.substr(0, tab);
    std::istringstream words(line.substr(tab + 1));
    for (std::string w; words >> w;) o.tokens.push_back(w);
    out.push_back(std::move(o));
  }
  return out;
}

void write_outputs(const std::string& path, std::span<const SystemOutput> outputs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write outputs " + path);
  for (const auto& o : outputs) out << o.id << '\t' << text::join(o.tokens) << '\n';
  if (!out) throw IoError("write failure in " + path);
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& bootstrap_metric_names() {
  static const std::vector<std::string> names{
      "bleu4",      "nist",       "meteor",    "grounding_f1", "grounding_precision", "grounding_recall",
      "distinct-1", "distinct-2", "entropy-4", "length"};
  return names;
}

namespace {

// Per-instance sufficient statistics, so that a resampled corpus score is a
// sum over indices.
struct SegmentStats {
  std::size_t bleu_matched[5] = {}, bleu_total[5] = {};
  std::size_t hyp_len = 0, closest_ref = 0;
  std::vector<double> nist_info;
  std::vector<std::size_t> nist_total;
  double mean_ref = 0.0;
  double value = 0.0;  // meteor / precision / recall / length
  double second = 0.0;  // recall for grounding_f1
  GramCounts grams;
};

using IndexedMetric = std::function<double(std::span<const std::size_t>)>;

IndexedMetric indexed_metric(const std::string& name, std::span<const EvalInstance> instances,
                             const text::StopwordList& stop) {
  auto stats = std::make_shared<std::vector<SegmentStats>>(instances.size());
  auto& st = *stats;
  if (name == "bleu4") {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      for (std::size_t n = 1; n <= 4; ++n) {
        const auto clip = max_reference_counts(inst.references, n);
        for (const auto& [g, c] : ngram_counts(inst.hypothesis, n)) {
          auto it = clip.find(g);
          if (it != clip.end()) st[i].bleu_matched[n] += std::min(c, it->second);
        }
        st[i].bleu_total[n] = ngram_total(inst.hypothesis.size(), n);
      }
      st[i].hyp_len = inst.hypothesis.size();
      const auto d = [&](std::size_t len) {
        return len > inst.hypothesis.size() ? len - inst.hypothesis.size() : inst.hypothesis.size() - len;
      };
      std::size_t closest = inst.references.front().size();
      for (const auto& r : inst.references)
        if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
      st[i].closest_ref = closest;
    }
    return [stats](std::span<const std::size_t> idx) {
      std::size_t m[5] = {}, t[5] = {}, hl = 0, rl = 0;
      for (auto i : idx) {
        const auto& s = (*stats)[i];
        for (int n = 1; n <= 4; ++n) m[n] += s.bleu_matched[n], t[n] += s.bleu_total[n];
        hl += s.hyp_len;
        rl += s.closest_ref;
      }
      double log_sum = 0.0;
      for (int n = 1; n <= 4; ++n) {
        if (m[n] == 0) return 0.0;
        log_sum += std::log(double(m[n]) / double(t[n]));
      }
      const double bp = hl > rl ? 1.0 : std::exp(1.0 - double(rl) / double(hl));
      return bp * std::exp(log_sum / 4.0);
    };
  }
  if (name == "nist") {
    // information weights stay those of the full reference corpus
    constexpr std::size_t kMaxN = 5;
    std::map<Gram, std::size_t> counts;
    std::size_t reference_words = 0;
    for (const auto& inst : instances)
      for (const auto& r : inst.references) {
        reference_words += r.size();
        for (std::size_t n = 1; n <= kMaxN; ++n)
          for (const auto& [g, c] : ngram_counts(r, n)) counts[g] += c;
      }
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      st[i].nist_info.assign(kMaxN + 1, 0.0);
      st[i].nist_total.assign(kMaxN + 1, 0);
      for (std::size_t n = 1; n <= kMaxN; ++n) {
        const auto clip = max_reference_counts(inst.references, n);
        for (const auto& [g, c] : ngram_counts(inst.hypothesis, n)) {
          auto it = clip.find(g);
          if (it == clip.end()) continue;
          const double context =
              n == 1 ? double(reference_words) : double(counts.at(Gram(g.begin(), g.end() - 1)));
          st[i].nist_info[n] += std::log2(context / double(counts.at(g))) * double(std::min(c, it->second));
        }
        st[i].nist_total[n] = ngram_total(inst.hypothesis.size(), n);
      }
      st[i].hyp_len = inst.hypothesis.size();
      for (const auto& r : inst.references) st[i].mean_ref += double(r.size());
      st[i].mean_ref /= double(inst.references.size());
    }
    return [stats](std::span<const std::size_t> idx) {
      constexpr std::size_t kN = 5;
      double info[kN + 1] = {}, hw = 0, rw = 0;
      std::size_t tot[kN + 1] = {};
      for (auto i : idx) {
        const auto& s = (*stats)[i];
        for (std::size_t n = 1; n <= kN; ++n) info[n] += s.nist_info[n], tot[n] += s.nist_total[n];
        hw += double(s.hyp_len);
        rw += s.mean_ref;
      }
      double score = 0.0;
      for (std::size_t n = 1; n <= kN; ++n) score += info[n] / double(std::max<std::size_t>(tot[n], 1));
      const double ratio = rw > 0.0 ? hw / rw : 0.0;
      if (ratio <= 0.0) return 0.0;
      if (ratio < 1.0) {
        const double beta = -std::log(0.5) / (std::log(1.5) * std::log(1.5));
        score *= std::exp(-beta * std::log(ratio) * std::log(ratio));
      }
      return score;
    };
  }
  auto mean_of = [stats](std::span<const std::size_t> idx) {
    double t = 0;
    for (auto i : idx) t += (*stats)[i].value;
    return t / double(idx.size());
  };
  if (name == "meteor" || name == "length") {
    for (std::size_t i = 0; i < instances.size(); ++i)
      st[i].value = name == "length" ? double(instances[i].hypothesis.size())
                                     : meteor_variant(instances[i].hypothesis, instances[i].references);
    return mean_of;
  }
  if (name == "grounding_precision" || name == "grounding_recall" || name == "grounding_f1") {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto g = grounding(instances[i].hypothesis, instances[i].document, instances[i].context, stop);
      st[i].value = g.precision;
      st[i].second = g.recall;
    }
    if (name == "grounding_precision") return mean_of;
    const bool recall_only = name == "grounding_recall";
    return [stats, recall_only](std::span<const std::size_t> idx) {
      double p = 0, r = 0;
      for (auto i : idx) p += (*stats)[i].value, r += (*stats)[i].second;
      p /= double(idx.size());
      r /= double(idx.size());
      return recall_only ? r : harmonic(p, r);
    };
  }
  if (name == "distinct-1" || name == "distinct-2" || name == "entropy-4") {
    const std::size_t n = name == "distinct-1" ? 1 : name == "distinct-2" ? 2 : 4;
    const bool entropy = name == "entropy-4";
    for (std::size_t i = 0; i < instances.size(); ++i) st[i].grams = ngram_counts(instances[i].hypothesis, n);
    return [stats, entropy](std::span<const std::size_t> idx) {
      GramCounts pooled;
      std::size_t total = 0;
      for (auto i : idx)
        for (const auto& [g, c] : (*stats)[i].grams) pooled[g] += c, total += c;
      if (total == 0) return 0.0;
      if (!entropy) return double(pooled.size()) / double(total);
      double h = 0.0;
      for (const auto& [g, c] : pooled) {
        const double p = double(c) / double(total);
        h -= p * std::log(p);
      }
      return h;
    };
  }
  throw ConfigError("unknown bootstrap metric '" + name + "'");
}

}  // namespace

BootstrapResult paired_bootstrap(std::span<const EvalInstance> system_a, std::span<const EvalInstance> system_b,
                                 const std::string& metric, std::size_t replicates, std::uint64_t seed,
                                 const text::StopwordList& stopwords) {
  if (system_a.size() != system_b.size()) throw DomainError("paired bootstrap needs equally sized systems");
  if (system_a.empty()) throw DomainError("paired bootstrap: no instances");
  for (std::size_t i = 0; i < system_a.size(); ++i)
    if (system_a[i].id != system_b[i].id)
      throw DomainError("paired bootstrap: instance " + std::to_string(i) + " is '" + system_a[i].id + "' vs '" +
                        system_b[i].id + "'");
  if (replicates == 0) throw ConfigError("bootstrap replicates must be positive");
  const auto score_a = indexed_metric(metric, system_a, stopwords);
  const auto score_b = indexed_metric(metric, system_b, stopwords);
  BootstrapResult r;
  r.metric = metric;
  r.replicates = replicates;
  std::vector<std::size_t> idx(system_a.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  r.score_a = score_a(idx);
  r.score_b = score_b(idx);
  Rng rng(seed);
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    for (auto& k : idx) k = rng.below(system_a.size());
    const double a = score_a(idx), b = score_b(idx);
    if (a > b) ++r.a_wins;
    else if (b > a) ++r.b_wins;
    else ++r.ties;
  }
  // one-sided tail for each direction, doubled
  const double not_a = double(r.b_wins + r.ties) / double(replicates);
  const double not_b = double(r.a_wins + r.ties) / double(replicates);
  r.p_value = std::min(1.0, 2.0 * std::min(not_a, not_b));
  return r;
}

}  // namespace cmr::eval
