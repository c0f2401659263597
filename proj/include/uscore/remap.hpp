#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uscore/corpusio.hpp"
#include "uscore/store.hpp"
#include "uscore/types.hpp"

namespace uscore::remap {

// Default flow threshold for keeping an argmax word alignment.
inline constexpr double kDefaultMinFlow = 0.05;

// Word-level supervision: column k of source/target holds the embeddings of pairs[k].
struct WordPairSet {
  std::vector<std::pair<std::string, std::string>> pairs;
  Matrix source;  // d x m
  Matrix target;  // d x m

  std::size_t size() const { return pairs.size(); }
};

enum class MapKind { kOrthogonal, kBiasRemoval };

struct ProjectionMap {
  MapKind kind = MapKind::kOrthogonal;
  Matrix w;     // orthogonal kind: d x d
  Vector bias;  // bias-removal kind: unit vector
  // Set when YX^T is rank deficient and the orthogonal optimum is not unique.
  bool degenerate = false;
  // Set when fewer pairs than dimensions were available.
  bool underdetermined = false;

  std::size_t dimension() const;
};

struct ClpOptions {
  bool normalize = false;  // unit-length columns before fitting
  bool center = false;     // mean-center columns before fitting
};

// Orthogonal W minimizing ||WX - Y||_F, via the SVD of YX^T (W = UV^T).
ProjectionMap fit_clp(const WordPairSet& pairs, const ClpOptions& options = {});

// Dominant direction of the stacked differences x_k - y_k, sign-normalized so
// its first non-zero component is positive.
ProjectionMap fit_umd(const WordPairSet& pairs);

enum class Side { kSource, kTarget, kBoth };

// Orthogonal maps act on the source side, bias removal on both.
Side default_side(MapKind kind);

Vector apply_remap(const Vector& e, const ProjectionMap& map);
EmbeddingStore apply_remap(const EmbeddingStore& store, const ProjectionMap& map);

struct BilingualStores {
  EmbeddingStore source;
  EmbeddingStore target;
};

BilingualStores apply_remap(const BilingualStores& stores, const ProjectionMap& map, Side side);

// Argmax transport alignments of every sentence pair, concatenated, with
// repeated (source word, target word) pairs kept at their first occurrence.
WordPairSet extract_word_pairs(const std::vector<ScoredPair>& pairs, const TokenLookup& source,
                               const TokenLookup& target, double min_flow = kDefaultMinFlow);

// Persistence through the store container (kind tags orthogonal-map / bias-direction).
EmbeddingStore to_store(const ProjectionMap& map);
ProjectionMap from_store(const EmbeddingStore& store);
void save_map(const ProjectionMap& map, const std::filesystem::path& path);
ProjectionMap load_map(const std::filesystem::path& path);

void write_word_pairs(const std::filesystem::path& path, const WordPairSet& pairs);

}  // namespace uscore::remap
