#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uscore/sentembed.hpp"
#include "uscore/store.hpp"
#include "uscore/tokenizer.hpp"
#include "uscore/transport.hpp"
#include "uscore/types.hpp"

// Every component is oriented higher-is-better: transport distances enter
// negated, LM scores are mean log-probabilities, sentence scores are cosines.
namespace uscore::scorer {

struct ScoreWeights {
  std::string preset = "tuned";
  double w_xlng = 0.5;
  double w_lm = 0.1;
  double w_pseudo = 0.4;
  double w_wrd = 0.6;
  double w_snt = 0.4;
  std::size_t remap_iterations = 0;
  bool normalize_components = true;  // ensembles only

  // "tuned", "plus" or "plusplus".
  static ScoreWeights from_preset(std::string_view name);
  void validate() const;
  // "#preset=... w_xlng=... ..." line heading score files.
  std::string header() const;
};

std::vector<std::string> preset_names();

struct Segment {
  TokenizedSentence source;
  TokenizedSentence hypothesis;
  std::optional<TokenizedSentence> pseudo_reference;
};

// Token matrices of one segment. `source` and `hypothesis` live in the shared
// (remapped) space; `hypothesis_mono` and `pseudo_reference` in the raw
// target-language space.
struct WordInputs {
  Matrix source;
  Matrix hypothesis;
  std::optional<Matrix> hypothesis_mono;
  std::optional<Matrix> pseudo_reference;
  double lm = 0.0;
};

// w_xlng·(−WMD(x, y)) + w_lm·LM(y) + w_pseudo·(−WMD(y, y')). Terms whose weight
// is zero are not evaluated.
double score_wrd(const WordInputs& in, const ScoreWeights& weights, const transport::WmdOptions& wmd = {});

// Stores feeding the word metric. The cross-lingual pair is the remapped one;
// the monolingual stores default to `hypothesis`, which is right for static
// word stores that are not remapped on the target side.
struct WordStores {
  const EmbeddingStore* source = nullptr;
  const EmbeddingStore* hypothesis = nullptr;
  const EmbeddingStore* hypothesis_mono = nullptr;
  const EmbeddingStore* pseudo_reference = nullptr;
};

// Word metric over a batch; lm_scores may be empty when w_lm is zero.
std::vector<double> score_wrd_batch(const std::vector<Segment>& batch, const WordStores& stores,
                                    const std::vector<double>& lm_scores, const ScoreWeights& weights,
                                    std::size_t workers = 1, const transport::WmdOptions& wmd = {});

// Cosine of the projected pooled embeddings.
double score_snt(const Vector& pooled_x, const Vector& pooled_y, const sentembed::SentenceProjection& projection);

std::vector<double> score_snt_batch(const std::vector<Segment>& batch, const EmbeddingStore& source_store,
                                    const EmbeddingStore& hypothesis_store,
                                    const sentembed::SentenceProjection& projection, std::size_t workers = 1);

// Zero mean, unit population variance; a constant vector maps to zeros.
std::vector<double> z_normalize(const std::vector<double>& v);

// w_wrd·wrd_i + w_snt·snt_i, after z-normalizing each component when
// weights.normalize_components is set.
std::vector<double> score_ensemble(const std::vector<double>& wrd, const std::vector<double>& snt,
                                   const ScoreWeights& weights);

// Header line, then "index<TAB>score".
void write_scores(const std::filesystem::path& path, const std::vector<double>& scores, const std::string& header);
// Reads a score file written by write_scores (lines starting with '#' skipped).
std::vector<double> load_scores(const std::filesystem::path& path);

}  // namespace uscore::scorer
