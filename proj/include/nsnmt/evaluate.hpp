#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsnmt/corpus.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/tensor.hpp"
#include "nsnmt/trainer.hpp"

// Evaluation: unsmoothed corpus BLEU-4, add-one-smoothed sentence BLEU
// ("BLEU+1"), paired bootstrap resampling for significance, and the
// complete/incomplete breakdown. Scoring is over whitespace tokens exactly
// as the corpus module produced them; no re-tokenization.

namespace nsnmt {

constexpr std::size_t kBleuOrder = 4;

// Clipped n-gram sufficient statistics of one hypothesis/reference pair.
// Everything corpus-level is a sum of these, which is what makes bootstrap
// resampling cheap.
struct SentenceStats {
  std::array<long long, kBleuOrder> match{};  // clipped n-gram matches
  std::array<long long, kBleuOrder> total{};  // hypothesis n-gram counts
  long long hyp_len = 0;
  long long ref_len = 0;
};

namespace detail {

inline std::map<std::vector<std::string>, long long> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, long long> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                    s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1;
  }
  return counts;
}

}  // namespace detail

inline SentenceStats sentence_stats(const Sentence& hyp, const Sentence& ref) {
  SentenceStats st;
  st.hyp_len = static_cast<long long>(hyp.size());
  st.ref_len = static_cast<long long>(ref.size());
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    auto hyp_counts = detail::ngram_counts(hyp, n);
    auto ref_counts = detail::ngram_counts(ref, n);
    long long match = 0, total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) match += std::min(count, it->second);
    }
    st.match[n - 1] = match;
    st.total[n - 1] = total;
  }
  return st;
}

struct BleuReport {
  double score = 0.0;  // 0..100
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 0.0;
  long long hyp_len = 0;
  long long ref_len = 0;
};

inline BleuReport bleu_from_stats(const std::vector<SentenceStats>& stats) {
  std::array<long long, kBleuOrder> match{}, total{};
  long long hyp_len = 0, ref_len = 0;
  for (const SentenceStats& st : stats) {
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      match[n] += st.match[n];
      total[n] += st.total[n];
    }
    hyp_len += st.hyp_len;
    ref_len += st.ref_len;
  }
  BleuReport r;
  r.hyp_len = hyp_len;
  r.ref_len = ref_len;
  if (hyp_len == 0) return r;
  r.brevity_penalty =
      hyp_len >= ref_len ? 1.0
                         : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    r.precisions[n] = total[n] > 0 ? static_cast<double>(match[n]) / static_cast<double>(total[n]) : 0.0;
    if (r.precisions[n] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(kBleuOrder));
  return r;
}

inline std::vector<SentenceStats> all_sentence_stats(const std::vector<Sentence>& hyps,
                                                     const std::vector<Sentence>& refs) {
  if (hyps.size() != refs.size()) {
    throw AlignmentError("hypothesis count " + std::to_string(hyps.size()) + " != reference count " +
                         std::to_string(refs.size()));
  }
  std::vector<SentenceStats> stats;
  stats.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) stats.push_back(sentence_stats(hyps[i], refs[i]));
  return stats;
}

// Papineni corpus BLEU-4: clipped modified precision per order, geometric
// mean, brevity penalty exp(1 - r/h) when h < r; 0 when any precision is 0.
inline BleuReport corpus_bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  return bleu_from_stats(all_sentence_stats(hyps, refs));
}

// Sentence-level BLEU with add-one smoothing on the n>=2 match and total
// counts, unsmoothed unigrams, the corpus brevity penalty, reported on the
// 0..1 scale.
inline double sentence_bleu_plus1(const Sentence& hyp, const Sentence& ref) {
  if (ref.empty()) throw ContractError("sentence_bleu_plus1: empty reference");
  if (hyp.empty()) return 0.0;
  SentenceStats st = sentence_stats(hyp, ref);
  if (st.match[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(st.match[0]) / static_cast<double>(st.total[0]));
  for (std::size_t n = 1; n < kBleuOrder; ++n) {
    log_sum += std::log(static_cast<double>(st.match[n] + 1) / static_cast<double>(st.total[n] + 1));
  }
  const double bp = st.hyp_len >= st.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(st.ref_len) / static_cast<double>(st.hyp_len));
  return bp * std::exp(log_sum / static_cast<double>(kBleuOrder));
}

// ---- paired bootstrap ---------------------------------------------------------

struct BootstrapResult {
  double p = 1.0;  // fraction of resamples where BLEU(A) <= BLEU(B)
  std::size_t samples = 0;
  std::size_t a_wins = 0;  // resamples with BLEU(A) > BLEU(B)
};

// Tests "system A is better than system B" against a shared reference by
// resampling test rows with replacement. Ties count against A, so
// paired_bootstrap(X, X) always reports p = 1.
inline BootstrapResult paired_bootstrap(const std::vector<Sentence>& hyps_a,
                                        const std::vector<Sentence>& hyps_b,
                                        const std::vector<Sentence>& refs, std::size_t samples,
                                        std::uint64_t seed) {
  if (samples < 100) throw ContractError("paired_bootstrap: need at least 100 resamples");
  if (hyps_a.size() != refs.size() || hyps_b.size() != refs.size()) {
    throw AlignmentError("paired_bootstrap: system outputs not aligned with references (" +
                         std::to_string(hyps_a.size()) + ", " + std::to_string(hyps_b.size()) + ", " +
                         std::to_string(refs.size()) + ")");
  }
  if (refs.empty()) throw ContractError("paired_bootstrap: empty test set");
  std::vector<SentenceStats> stats_a = all_sentence_stats(hyps_a, refs);
  std::vector<SentenceStats> stats_b = all_sentence_stats(hyps_b, refs);

  Rng rng(seed);
  const std::size_t n = refs.size();
  BootstrapResult result;
  result.samples = samples;
  std::vector<SentenceStats> sample_a(n), sample_b(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = rng.below(n);
      sample_a[i] = stats_a[pick];
      sample_b[i] = stats_b[pick];
    }
    const double bleu_a = bleu_from_stats(sample_a).score;
    const double bleu_b = bleu_from_stats(sample_b).score;
    if (bleu_a > bleu_b) ++result.a_wins;
  }
  result.p = static_cast<double>(samples - result.a_wins) / static_cast<double>(samples);
  return result;
}

// ---- complete/incomplete breakdown --------------------------------------------

struct SubsetScore {
  std::size_t rows = 0;
  bool scored = false;  // false when the subset is empty
  BleuReport bleu;
};

struct BreakdownReport {
  SubsetScore complete;
  SubsetScore incomplete;
};

// complete_mask[i] is true when test row i had every source cell present.
inline BreakdownReport breakdown(const std::vector<bool>& complete_mask, const std::vector<Sentence>& hyps,
                                 const std::vector<Sentence>& refs) {
  if (complete_mask.size() != hyps.size() || hyps.size() != refs.size()) {
    throw AlignmentError("breakdown: mask/hypotheses/references misaligned");
  }
  std::vector<SentenceStats> stats = all_sentence_stats(hyps, refs);
  std::vector<SentenceStats> complete, incomplete;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    (complete_mask[i] ? complete : incomplete).push_back(stats[i]);
  }
  BreakdownReport r;
  r.complete.rows = complete.size();
  r.incomplete.rows = incomplete.size();
  if (!complete.empty()) {
    r.complete.scored = true;
    r.complete.bleu = bleu_from_stats(complete);
  }
  if (!incomplete.empty()) {
    r.incomplete.scored = true;
    r.incomplete.bleu = bleu_from_stats(incomplete);
  }
  return r;
}

// (sum token NLL) / (sum token count), natural log, via the task's loss.
inline double log_perplexity(const TrainTask& task, const std::vector<Example>& dataset) {
  if (dataset.empty()) throw ContractError("log_perplexity: empty dataset");
  return validation_logppl(task, dataset);
}

}  // namespace nsnmt
