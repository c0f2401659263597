#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uscore/mining.hpp"
#include "uscore/tokenizer.hpp"

namespace uscore::mining {

// Character-trigram naive Bayes language identifier with add-one smoothing.
// Stands in for an external identifier; trained on the monolingual pools themselves.
class TrigramLanguageId {
 public:
  void train(const std::string& label, const std::vector<TokenizedSentence>& sentences);
  std::string predict(std::string_view text) const;
  LanguagePredicate predicate(std::string expected) const;

 private:
  struct Profile {
    std::map<std::u32string, std::size_t> counts;
    std::size_t total = 0;
    std::size_t documents = 0;
  };
  std::map<std::string, Profile> profiles_;
  std::size_t vocabulary_ = 0;
  std::size_t documents_ = 0;
};

// One label per line, aligned with the lines of a corpus file.
std::vector<std::string> load_language_labels(const std::filesystem::path& path);

// Keeps sentences whose label equals `expected`. Labels align with the corpus
// the sentences were loaded from; `indices` maps sentences to label rows.
FilteredCorpus apply_language_labels(const std::vector<TokenizedSentence>& sentences,
                                     const std::vector<std::size_t>& indices,
                                     const std::vector<std::string>& labels, const std::string& expected);

}  // namespace uscore::mining
