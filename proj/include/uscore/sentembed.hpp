#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "uscore/corpusio.hpp"
#include "uscore/store.hpp"
#include "uscore/types.hpp"

namespace uscore::sentembed {

enum class DenominatorMode {
  kExcludePositive,  // sum over j != i only
  kIncludePositive,  // standard in-batch softmax over all j
};

DenominatorMode parse_denominator_mode(std::string_view name);
std::string_view to_string(DenominatorMode mode);

struct ContrastiveConfig {
  double temperature = 0.05;
  std::size_t batch_size = 256;
  double learning_rate = 5e-5;
  std::size_t epochs_per_iteration = 1;
  DenominatorMode denominator_mode = DenominatorMode::kExcludePositive;
  std::optional<std::uint64_t> seed;  // required by train_projection

  // AdamW
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

// Linear map applied to pooled sentence vectors of both languages.
struct SentenceProjection {
  Matrix p;
  std::vector<double> loss_log;  // one entry per optimizer step

  static SentenceProjection identity(std::size_t dimension);
  Vector apply(const Vector& v) const { return p * v; }
  // Row-per-sentence input and output.
  Matrix apply_rows(const Matrix& rows) const { return rows * p.transpose(); }
};

// Mean of the token vectors (one per row).
Vector pool_sentence(const Matrix& token_embeddings);

// Pooled vector of sentence `index`: read directly from a sentence store,
// mean of the token vectors for word and contextual stores.
Vector pooled_embedding(const EmbeddingStore& store, const TokenizedSentence& sentence, std::size_t index);

// Pooled vector of every sentence, one row each. Sentence stores are read
// directly; word and contextual stores are mean-pooled.
Matrix pool_corpus(const std::vector<TokenizedSentence>& sentences, const EmbeddingStore& store);

double cosine_score(const Vector& x, const Vector& y);

struct LossResult {
  double loss = 0.0;
  Matrix gradient;               // d(loss)/d(projection)
  std::vector<double> per_item;  // L_i
};

// Temperature-scaled contrastive loss of the batch under `projection`; row i of
// batch_x is the positive partner of row i of batch_y.
LossResult contrastive_loss(const Matrix& batch_x, const Matrix& batch_y, const Matrix& projection,
                            const ContrastiveConfig& config);

// AdamW mini-batch training over (source row, target row) index pairs. Batches
// are consecutive chunks of a seeded shuffle; a trailing chunk smaller than two
// pairs is skipped.
SentenceProjection train_projection(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    const Matrix& source, const Matrix& target, const SentenceProjection& init,
                                    const ContrastiveConfig& config);

// Convenience form over mined pairs; pooled vectors come from the stores.
SentenceProjection train_projection(const std::vector<ScoredPair>& pairs, const EmbeddingStore& source_store,
                                    const EmbeddingStore& target_store, const SentenceProjection& init,
                                    const ContrastiveConfig& config);

void save_projection(const SentenceProjection& projection, const std::filesystem::path& path);
SentenceProjection load_projection(const std::filesystem::path& path);
// "step<TAB>loss" lines.
void write_loss_log(const SentenceProjection& projection, const std::filesystem::path& path);

// Seeded Fisher-Yates permutation of [0, n), identical on every platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace uscore::sentembed
