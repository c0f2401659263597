#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "uscore/tokenizer.hpp"

namespace uscore::langmodel {

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";

enum class SmoothingKind { kWittenBell, kAddK };

struct Smoothing {
  SmoothingKind kind = SmoothingKind::kWittenBell;
  double k = 1.0;  // add-k only

  static Smoothing witten_bell() { return {SmoothingKind::kWittenBell, 0.0}; }
  static Smoothing add_k(double k) { return {SmoothingKind::kAddK, k}; }
  bool operator==(const Smoothing&) const = default;
};

// "witten-bell", "add-k:<k>" (or "add-one").
Smoothing parse_smoothing(std::string_view spec);
std::string to_string(const Smoothing& smoothing);

// Token-level n-gram model. Outcomes are the vocabulary plus <unk> and </s>;
// <s> only pads contexts.
class NGramModel {
 public:
  using Id = std::uint32_t;
  static constexpr Id kUnkId = 0;
  static constexpr Id kEosId = 1;
  static constexpr Id kBosId = 2;

  int order() const { return order_; }
  const Smoothing& smoothing() const { return smoothing_; }
  // Vocabulary words, sorted; excludes the reserved symbols.
  std::vector<std::string> vocabulary() const;
  std::size_t outcome_count() const { return words_.size() - 1; }  // all ids but <s>

  // Maps a token to its id; unknown tokens and "<s>" give <unk>, "</s>" the end id.
  Id id(std::string_view token) const;
  const std::string& word(Id id) const { return words_.at(id); }

  // P(word | context) over vocabulary ∪ {<unk>, </s>}. Only the last
  // order-1 context tokens matter; missing history is <s>-padded. `word` may
  // be kEos spelled "</s>".
  double probability(const std::vector<std::string>& context, std::string_view word) const;
  double probability_ids(const std::vector<Id>& context, Id word) const;

  // Distribution over vocabulary ∪ {<unk>} only, i.e. conditioned on the
  // sentence continuing.
  double word_probability(const std::vector<std::string>& context, std::string_view word) const;

  friend NGramModel train_ngram(const std::vector<TokenizedSentence>& corpus, int order, Smoothing smoothing,
                                const std::optional<std::set<std::string>>& vocabulary);
  friend void save_model(const NGramModel& model, const std::filesystem::path& path);
  friend NGramModel load_model(const std::filesystem::path& path);
  friend bool operator==(const NGramModel&, const NGramModel&) = default;

 private:
  using Context = std::vector<Id>;
  struct Entry {
    std::map<Id, std::uint64_t> next;
    std::uint64_t total = 0;
    bool operator==(const Entry&) const = default;
  };

  double interpolate(const Context& history, std::size_t length, Id word) const;

  int order_ = 3;
  Smoothing smoothing_;
  std::vector<std::string> words_;  // by id: <unk>, </s>, <s>, then sorted vocabulary
  std::map<std::string, Id, std::less<>> ids_;
  std::vector<std::map<Context, Entry>> tables_;  // tables_[m]: contexts of length m
};

// Counts every n-gram up to `order` over <s>-padded sentences ending in </s>.
// With a fixed vocabulary, out-of-vocabulary tokens are counted as <unk>.
NGramModel train_ngram(const std::vector<TokenizedSentence>& corpus, int order = 3,
                       Smoothing smoothing = Smoothing::witten_bell(),
                       const std::optional<std::set<std::string>>& vocabulary = std::nullopt);

// Mean natural-log probability of the tokens and the closing </s>.
double lm_score(const NGramModel& model, const TokenizedSentence& sentence);

void save_model(const NGramModel& model, const std::filesystem::path& path);
NGramModel load_model(const std::filesystem::path& path);

// TSV "index<TAB>score" lines. Indices must cover 0..n-1 (n = expected_count
// when given, else the largest index + 1); a gap names the missing index.
std::map<std::size_t, double> load_external_scores(const std::filesystem::path& path,
                                                   std::optional<std::size_t> expected_count = std::nullopt);
void write_scores(const std::filesystem::path& path, const std::vector<double>& scores);

}  // namespace uscore::langmodel
