#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uscore/corpusio.hpp"
#include "uscore/store.hpp"
#include "uscore/types.hpp"

namespace uscore::mining {

enum class Strategy { kWmdPrefetch, kRatioMargin };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy strategy);

struct MiningConfig {
  Strategy strategy = Strategy::kWmdPrefetch;
  std::size_t k_prefetch = 20;  // exact-WMD candidates per query
  std::size_t k_margin = 5;     // neighbourhood size of the ratio margin
  double extraction_rate = 0.05;
  bool dedup = false;
  std::size_t workers = 1;  // execution only; results do not depend on it

  void validate() const;
};

struct FilterConfig {
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 30;
  double max_overlap = 0.5;
  // Identifier of the language predicate in use ("trigram", "labels"), for reporting.
  std::optional<std::string> language_filter;

  void validate() const;
};

// One mined correspondence between pool indices; higher score is better.
struct Match {
  std::size_t source = 0;
  std::size_t target = 0;
  double score = 0.0;

  bool operator==(const Match&) const = default;
};

// Token matrices and uniform centroids of every sentence of a pool.
struct EmbeddedPool {
  std::vector<Matrix> tokens;
  Matrix centroids;  // one row per sentence

  std::size_t size() const { return tokens.size(); }
};

EmbeddedPool embed_pool(const std::vector<TokenizedSentence>& sentences, const TokenLookup& lookup);

struct Candidate {
  std::size_t target = 0;
  double distance = 0.0;
};

// For every query: the k_prefetch targets nearest by WCD, re-ranked by exact
// WMD (ascending, ties to the lower target index).
std::vector<std::vector<Candidate>> wmd_candidates(const EmbeddedPool& source, const EmbeddedPool& target,
                                                   std::size_t k_prefetch, std::size_t workers = 1);

// Best WMD target per source sentence, score = -WMD, sorted by descending
// score then (source, target).
std::vector<Match> mine_wmd(const EmbeddedPool& source, const EmbeddedPool& target, const MiningConfig& config);
std::vector<Match> mine_wmd(const std::vector<TokenizedSentence>& source, const std::vector<TokenizedSentence>& target,
                            const TokenLookup& source_lookup, const TokenLookup& target_lookup,
                            const MiningConfig& config);

// Ratio margin: cos(x, y) / (sum_{N_x} cos(x, z) / 2k + sum_{N_y} cos(y, z) / 2k).
double ratio_margin(double cos_xy, std::span<const double> x_neighbourhood, std::span<const double> y_neighbourhood);

// Forward ratio-margin mining over sentence embeddings (one row per sentence):
// for each source the target of maximal margin, sorted like mine_wmd.
std::vector<Match> mine_margin(const Matrix& source, const Matrix& target, const MiningConfig& config);

// Sorts by descending score, ties by (source, target).
void sort_matches(std::vector<Match>& matches);

std::vector<ScoredPair> attach_sentences(const std::vector<Match>& matches,
                                         const std::vector<TokenizedSentence>& source,
                                         const std::vector<TokenizedSentence>& target);

// ceil(rate * n), robust to rate * n landing a rounding error above an integer.
std::size_t top_rate_count(std::size_t n, double rate);

// The ceil(rate * n) highest-scoring items, in descending score order with
// earlier input first among equal scores.
std::vector<ScoredPair> select_top_rate(const std::vector<ScoredPair>& pairs, double rate);
std::vector<Match> select_top_rate(const std::vector<Match>& matches, double rate);

// Drops every pair whose source or target text already occurs in a kept pair.
std::vector<ScoredPair> dedup_pairs(const std::vector<ScoredPair>& pairs);
std::vector<Match> dedup_matches(const std::vector<Match>& matches, const std::vector<TokenizedSentence>& source,
                                 const std::vector<TokenizedSentence>& target);

// ---- filtering ----

struct FilterReport {
  std::size_t input = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t wrong_language = 0;
  std::size_t overlap = 0;
  std::size_t kept = 0;

  // "filter.<name>\t<count>" lines.
  void write(std::ostream& out) const;
};

using LanguagePredicate = std::function<bool(const TokenizedSentence&)>;

struct FilteredCorpus {
  std::vector<TokenizedSentence> sentences;
  std::vector<std::size_t> kept_indices;
  FilterReport report;
};

struct FilteredPairs {
  std::vector<ScoredPair> pairs;
  FilterReport report;
};

FilteredCorpus filter_corpus(const std::vector<TokenizedSentence>& corpus, const FilterConfig& config,
                             const LanguagePredicate& language = {});

FilteredPairs filter_pairs(const std::vector<ScoredPair>& pairs, const FilterConfig& config,
                           const LanguagePredicate& source_language = {},
                           const LanguagePredicate& target_language = {});

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

// 1 - levenshtein(a, b) / max(|a|, |b|) over code points; 1 for two empty strings.
double char_overlap(std::string_view a, std::string_view b);

}  // namespace uscore::mining
