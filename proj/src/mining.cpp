#include "uscore/mining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "uscore/error.hpp"
#include "uscore/parallel.hpp"
#include "uscore/transport.hpp"

namespace uscore::mining {

namespace {

constexpr std::size_t kMarginBlock = 512;

bool better(const Match& a, const Match& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.source != b.source) return a.source < b.source;
  return a.target < b.target;
}

Matrix row_normalized(const Matrix& m, const char* side) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm > 0.0)) throw ArgumentError(std::string(side) + " sentence embedding " + std::to_string(i) + " has zero norm");
    out.row(i) /= norm;
  }
  return out;
}

// Mean of the k largest entries.
double top_k_mean(std::vector<double>& values, std::size_t k) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += values[i];
  return sum / static_cast<double>(k);
}

}  // namespace

Strategy parse_strategy(std::string_view name) {
  if (name == "wmd-prefetch") return Strategy::kWmdPrefetch;
  if (name == "ratio-margin") return Strategy::kRatioMargin;
  throw ArgumentError("unknown mining strategy '" + std::string(name) + "' (expected wmd-prefetch|ratio-margin)");
}

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::kWmdPrefetch ? "wmd-prefetch" : "ratio-margin";
}

void MiningConfig::validate() const {
  if (k_prefetch < 1 || k_margin < 1) throw ArgumentError("k values must be at least 1");
  if (!(extraction_rate > 0.0 && extraction_rate <= 1.0)) throw ArgumentError("extraction rate must lie in (0, 1]");
}

EmbeddedPool embed_pool(const std::vector<TokenizedSentence>& sentences, const TokenLookup& lookup) {
  EmbeddedPool pool;
  pool.tokens.reserve(sentences.size());
  pool.centroids.resize(static_cast<Eigen::Index>(sentences.size()),
                        static_cast<Eigen::Index>(lookup.store().dimension()));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].tokens.empty()) throw ArgumentError("sentence " + std::to_string(i) + " has no tokens");
    pool.tokens.push_back(lookup.embed(sentences[i], i));
    pool.centroids.row(static_cast<Eigen::Index>(i)) = pool.tokens.back().colwise().mean();
  }
  return pool;
}

std::vector<std::vector<Candidate>> wmd_candidates(const EmbeddedPool& source, const EmbeddedPool& target,
                                                   std::size_t k_prefetch, std::size_t workers) {
  if (source.size() == 0 || target.size() == 0) throw ArgumentError("mining needs non-empty pools");
  if (source.centroids.cols() != target.centroids.cols()) throw ArgumentError("pool embedding dimensions differ");
  if (k_prefetch < 1) throw ArgumentError("k_prefetch must be at least 1");
  const std::size_t k = std::min(k_prefetch, target.size());
  std::vector<std::vector<Candidate>> out(source.size());
  parallel_for(source.size(), workers, [&](std::size_t q) {
    const auto qi = static_cast<Eigen::Index>(q);
    std::vector<std::pair<double, std::size_t>> by_wcd(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
      by_wcd[j] = {(source.centroids.row(qi) - target.centroids.row(static_cast<Eigen::Index>(j))).norm(), j};
    }
    std::partial_sort(by_wcd.begin(), by_wcd.begin() + static_cast<std::ptrdiff_t>(k), by_wcd.end());
    std::vector<Candidate> cands;
    cands.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t j = by_wcd[c].second;
      cands.push_back({j, transport::wmd(source.tokens[q], target.tokens[j]).distance});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.target < b.target;
    });
    out[q] = std::move(cands);
  });
  return out;
}

std::vector<Match> mine_wmd(const EmbeddedPool& source, const EmbeddedPool& target, const MiningConfig& config) {
  config.validate();
  const auto candidates = wmd_candidates(source, target, config.k_prefetch, config.workers);
  std::vector<Match> matches;
  matches.reserve(candidates.size());
  for (std::size_t q = 0; q < candidates.size(); ++q) {
    matches.push_back({q, candidates[q].front().target, -candidates[q].front().distance});
  }
  sort_matches(matches);
  return matches;
}

std::vector<Match> mine_wmd(const std::vector<TokenizedSentence>& source, const std::vector<TokenizedSentence>& target,
                            const TokenLookup& source_lookup, const TokenLookup& target_lookup,
                            const MiningConfig& config) {
  if (source.empty() || target.empty()) throw ArgumentError("mining needs non-empty pools");
  return mine_wmd(embed_pool(source, source_lookup), embed_pool(target, target_lookup), config);
}

double ratio_margin(double cos_xy, std::span<const double> x_neighbourhood, std::span<const double> y_neighbourhood) {
  if (x_neighbourhood.empty() || y_neighbourhood.empty()) throw ArgumentError("margin needs non-empty neighbourhoods");
  const double nx = std::accumulate(x_neighbourhood.begin(), x_neighbourhood.end(), 0.0) /
                    (2.0 * static_cast<double>(x_neighbourhood.size()));
  const double ny = std::accumulate(y_neighbourhood.begin(), y_neighbourhood.end(), 0.0) /
                    (2.0 * static_cast<double>(y_neighbourhood.size()));
  return cos_xy / (nx + ny);
}

std::vector<Match> mine_margin(const Matrix& source, const Matrix& target, const MiningConfig& config) {
  config.validate();
  if (source.rows() == 0 || target.rows() == 0) throw ArgumentError("mining needs non-empty pools");
  if (source.cols() != target.cols()) throw ArgumentError("sentence embedding dimensions differ");
  const auto n = static_cast<std::size_t>(source.rows());
  const auto m = static_cast<std::size_t>(target.rows());
  const std::size_t k = config.k_margin;
  if (k >= n || k >= m) throw ArgumentError("k_margin must be smaller than both pool sizes");
  const Matrix xs = row_normalized(source, "source");
  const Matrix ys = row_normalized(target, "target");

  // Neighbourhood averages: r_x over targets, r_y over sources.
  Vector rx(static_cast<Eigen::Index>(n));
  Vector ry(static_cast<Eigen::Index>(m));
  const std::size_t x_blocks = (n + kMarginBlock - 1) / kMarginBlock;
  const std::size_t y_blocks = (m + kMarginBlock - 1) / kMarginBlock;
  parallel_for(x_blocks, config.workers, [&](std::size_t b) {
    const auto begin = static_cast<Eigen::Index>(b * kMarginBlock);
    const auto rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(kMarginBlock), static_cast<Eigen::Index>(n) - begin);
    const Matrix sims = xs.middleRows(begin, rows) * ys.transpose();
    std::vector<double> buf(m);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = sims(r, static_cast<Eigen::Index>(j));
      rx[begin + r] = top_k_mean(buf, k);
    }
  });
  parallel_for(y_blocks, config.workers, [&](std::size_t b) {
    const auto begin = static_cast<Eigen::Index>(b * kMarginBlock);
    const auto rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(kMarginBlock), static_cast<Eigen::Index>(m) - begin);
    const Matrix sims = ys.middleRows(begin, rows) * xs.transpose();
    std::vector<double> buf(n);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = sims(r, static_cast<Eigen::Index>(i));
      ry[begin + r] = top_k_mean(buf, k);
    }
  });

  std::vector<Match> matches(n);
  parallel_for(x_blocks, config.workers, [&](std::size_t b) {
    const auto begin = static_cast<Eigen::Index>(b * kMarginBlock);
    const auto rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(kMarginBlock), static_cast<Eigen::Index>(n) - begin);
    const Matrix sims = xs.middleRows(begin, rows) * ys.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = begin + r;
      Match best{static_cast<std::size_t>(i), 0, -std::numeric_limits<double>::infinity()};
      for (std::size_t j = 0; j < m; ++j) {
        const double margin = sims(r, static_cast<Eigen::Index>(j)) / (rx[i] / 2.0 + ry[static_cast<Eigen::Index>(j)] / 2.0);
        if (margin > best.score) {
          best.target = j;
          best.score = margin;
        }
      }
      matches[static_cast<std::size_t>(i)] = best;
    }
  });
  sort_matches(matches);
  return matches;
}

void sort_matches(std::vector<Match>& matches) { std::sort(matches.begin(), matches.end(), better); }

std::vector<ScoredPair> attach_sentences(const std::vector<Match>& matches,
                                         const std::vector<TokenizedSentence>& source,
                                         const std::vector<TokenizedSentence>& target) {
  std::vector<ScoredPair> out;
  out.reserve(matches.size());
  for (const Match& m : matches) {
    if (m.source >= source.size() || m.target >= target.size()) throw ArgumentError("match index out of range");
    out.push_back({source[m.source], target[m.target], m.score, m.source, m.target});
  }
  return out;
}

std::size_t top_rate_count(std::size_t n, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ArgumentError("rate must lie in (0, 1]");
  const long double exact = static_cast<long double>(rate) * static_cast<long double>(n);
  const long double nearest = std::round(exact);
  // rate is itself a rounded decimal; products within 1e-9 of an integer are that integer
  const long double value = std::abs(exact - nearest) <= 1e-9L * std::max<long double>(1.0L, exact) ? nearest : exact;
  return std::min(n, static_cast<std::size_t>(std::ceil(value)));
}

namespace {

template <typename T, typename Score>
std::vector<T> select_top(const std::vector<T>& items, double rate, Score score) {
  const std::size_t keep = top_rate_count(items.size(), rate);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score(items[a]) > score(items[b]); });
  std::vector<T> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(items[order[i]]);
  return out;
}

}  // namespace

std::vector<ScoredPair> select_top_rate(const std::vector<ScoredPair>& pairs, double rate) {
  return select_top(pairs, rate, [](const ScoredPair& p) { return p.score; });
}

std::vector<Match> select_top_rate(const std::vector<Match>& matches, double rate) {
  return select_top(matches, rate, [](const Match& m) { return m.score; });
}

std::vector<ScoredPair> dedup_pairs(const std::vector<ScoredPair>& pairs) {
  std::unordered_set<std::string> seen_source;
  std::unordered_set<std::string> seen_target;
  std::vector<ScoredPair> out;
  for (const auto& p : pairs) {
    if (seen_source.contains(p.source.text) || seen_target.contains(p.target.text)) continue;
    seen_source.insert(p.source.text);
    seen_target.insert(p.target.text);
    out.push_back(p);
  }
  return out;
}

std::vector<Match> dedup_matches(const std::vector<Match>& matches, const std::vector<TokenizedSentence>& source,
                                 const std::vector<TokenizedSentence>& target) {
  std::unordered_set<std::string> seen_source;
  std::unordered_set<std::string> seen_target;
  std::vector<Match> out;
  for (const auto& m : matches) {
    const std::string& s = source.at(m.source).text;
    const std::string& t = target.at(m.target).text;
    if (seen_source.contains(s) || seen_target.contains(t)) continue;
    seen_source.insert(s);
    seen_target.insert(t);
    out.push_back(m);
  }
  return out;
}

}  // namespace uscore::mining
