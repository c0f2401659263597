#include <algorithm>
#include <numeric>

#include "uscore/error.hpp"
#include "uscore/mining.hpp"

namespace uscore::mining {

namespace {

enum class Verdict { kKeep, kTooShort, kTooLong, kWrongLanguage };

Verdict judge(const TokenizedSentence& s, const FilterConfig& config, const LanguagePredicate& language) {
  if (s.tokens.size() < config.min_tokens) return Verdict::kTooShort;
  if (s.tokens.size() > config.max_tokens) return Verdict::kTooLong;
  if (language && !language(s)) return Verdict::kWrongLanguage;
  return Verdict::kKeep;
}

void count(FilterReport& report, Verdict v) {
  switch (v) {
    case Verdict::kTooShort: ++report.too_short; break;
    case Verdict::kTooLong: ++report.too_long; break;
    case Verdict::kWrongLanguage: ++report.wrong_language; break;
    case Verdict::kKeep: break;
  }
}

}  // namespace

void FilterConfig::validate() const {
  if (min_tokens == 0 || min_tokens > max_tokens) throw ArgumentError("need 0 < min_tokens <= max_tokens");
  if (!(max_overlap >= 0.0 && max_overlap <= 1.0)) throw ArgumentError("max_overlap must lie in [0, 1]");
}

void FilterReport::write(std::ostream& out) const {
  out << "filter.input\t" << input << '\n'
      << "filter.too_short\t" << too_short << '\n'
      << "filter.too_long\t" << too_long << '\n'
      << "filter.wrong_language\t" << wrong_language << '\n'
      << "filter.overlap\t" << overlap << '\n'
      << "filter.kept\t" << kept << '\n';
}

FilteredCorpus filter_corpus(const std::vector<TokenizedSentence>& corpus, const FilterConfig& config,
                             const LanguagePredicate& language) {
  config.validate();
  FilteredCorpus out;
  out.report.input = corpus.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Verdict v = judge(corpus[i], config, language);
    count(out.report, v);
    if (v != Verdict::kKeep) continue;
    out.sentences.push_back(corpus[i]);
    out.kept_indices.push_back(i);
  }
  out.report.kept = out.sentences.size();
  return out;
}

FilteredPairs filter_pairs(const std::vector<ScoredPair>& pairs, const FilterConfig& config,
                           const LanguagePredicate& source_language, const LanguagePredicate& target_language) {
  config.validate();
  FilteredPairs out;
  out.report.input = pairs.size();
  for (const auto& p : pairs) {
    Verdict v = judge(p.source, config, source_language);
    if (v == Verdict::kKeep) v = judge(p.target, config, target_language);
    count(out.report, v);
    if (v != Verdict::kKeep) continue;
    if (char_overlap(p.source.text, p.target.text) > config.max_overlap) {
      ++out.report.overlap;
      continue;
    }
    out.pairs.push_back(p);
  }
  out.report.kept = out.pairs.size();
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double char_overlap(std::string_view a, std::string_view b) {
  const std::u32string ca = decode_utf8(a);
  const std::u32string cb = decode_utf8(b);
  const std::size_t longest = std::max(ca.size(), cb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(ca, cb)) / static_cast<double>(longest);
}

}  // namespace uscore::mining
