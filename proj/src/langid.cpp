#include "uscore/langid.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "uscore/error.hpp"

namespace uscore::mining {

namespace {

std::vector<std::u32string> trigrams(std::string_view text) {
  const std::u32string padded = U"  " + decode_utf8(text) + U" ";
  std::vector<std::u32string> out;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back(padded.substr(i, 3));
  return out;
}

}  // namespace

void TrigramLanguageId::train(const std::string& label, const std::vector<TokenizedSentence>& sentences) {
  Profile& p = profiles_[label];
  for (const auto& s : sentences) {
    for (auto& g : trigrams(s.text)) {
      ++p.counts[g];
      ++p.total;
    }
    ++p.documents;
    ++documents_;
  }
  std::set<std::u32string> vocab;
  for (const auto& [_, prof] : profiles_) {
    for (const auto& [g, c] : prof.counts) vocab.insert(g);
  }
  vocabulary_ = vocab.size();
}

std::string TrigramLanguageId::predict(std::string_view text) const {
  if (profiles_.empty()) throw ArgumentError("language identifier has not been trained");
  const auto grams = trigrams(text);
  std::string best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [label, p] : profiles_) {
    double score = std::log(static_cast<double>(p.documents) / static_cast<double>(documents_));
    const double denom = static_cast<double>(p.total + vocabulary_ + 1);
    for (const auto& g : grams) {
      const auto it = p.counts.find(g);
      const double c = it == p.counts.end() ? 0.0 : static_cast<double>(it->second);
      score += std::log((c + 1.0) / denom);
    }
    if (score > best_score) {
      best_score = score;
      best = label;
    }
  }
  return best;
}

LanguagePredicate TrigramLanguageId::predicate(std::string expected) const {
  return [this, expected = std::move(expected)](const TokenizedSentence& s) { return predict(s.text) == expected; };
}

std::vector<std::string> load_language_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  return labels;
}

FilteredCorpus apply_language_labels(const std::vector<TokenizedSentence>& sentences,
                                     const std::vector<std::size_t>& indices,
                                     const std::vector<std::string>& labels, const std::string& expected) {
  if (indices.size() != sentences.size()) throw ArgumentError("one label index per sentence required");
  FilteredCorpus out;
  out.report.input = sentences.size();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (indices[i] >= labels.size()) {
      throw FormatError("label file has no row " + std::to_string(indices[i] + 1));
    }
    if (labels[indices[i]] != expected) {
      ++out.report.wrong_language;
      continue;
    }
    out.sentences.push_back(sentences[i]);
    out.kept_indices.push_back(i);
  }
  out.report.kept = out.sentences.size();
  return out;
}

}  // namespace uscore::mining
