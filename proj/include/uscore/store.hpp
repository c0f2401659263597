#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uscore/tokenizer.hpp"
#include "uscore/types.hpp"

namespace uscore {

// Kind tag written into the binary header. Values 3..5 tag learned maps that
// reuse the store container.
enum class StoreKind : std::uint8_t {
  kStaticWord = 0,
  kContextualToken = 1,
  kSentence = 2,
  kOrthogonalMap = 3,
  kBiasDirection = 4,
  kSentenceProjection = 5,
};

std::string_view to_string(StoreKind kind);
StoreKind parse_store_kind(std::string_view name);

// Key of token `token` of sentence `sentence` in a contextual-token store.
std::string contextual_key(std::size_t sentence, std::size_t token);
// Key of sentence `sentence` in a sentence store.
std::string sentence_key(std::size_t sentence);

// Vectors of one dimension keyed by unique strings, in insertion order.
// Held in double precision; the binary format stores binary32.
class EmbeddingStore {
 public:
  EmbeddingStore(StoreKind kind, std::size_t dimension);

  // Builds a store whose entry i is (keys[i], row i of vectors).
  static EmbeddingStore from_matrix(StoreKind kind, std::vector<std::string> keys, const Matrix& vectors);

  void add(std::string key, const Vector& v);

  StoreKind kind() const { return kind_; }
  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  const std::string& key(std::size_t i) const { return keys_[i]; }
  const std::vector<std::string>& keys() const { return keys_; }
  Eigen::Map<const Vector> row(std::size_t i) const;
  std::optional<std::size_t> find(std::string_view key) const;

  // All vectors, one row per entry.
  Matrix matrix() const;
  // Same keys and kind, new vectors (rows must match size()).
  EmbeddingStore with_vectors(const Matrix& vectors) const;
  EmbeddingStore with_kind(StoreKind kind) const;

 private:
  StoreKind kind_;
  std::size_t dim_;
  std::vector<std::string> keys_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads either format; binary is recognized by its magic bytes.
EmbeddingStore load_embedding_store(const std::filesystem::path& path);
void save_binary(const EmbeddingStore& store, const std::filesystem::path& path);
void save_text(const EmbeddingStore& store, const std::filesystem::path& path);

// SHA-256 (hex) over every vector as little-endian binary32, in entry order.
// This is the checksum an exporter records in its sidecar.
std::string float_checksum(const EmbeddingStore& store);

struct SidecarCheck {
  bool ok = false;
  std::vector<std::string> problems;
};

// Compares a store against the JSON sidecar written next to it by the exporter
// (fields: kind, dimension, count, float_checksum_sha256).
SidecarCheck check_sidecar(const EmbeddingStore& store, const std::filesystem::path& sidecar);

// Resolves the vectors of a sentence's tokens in a word or contextual store.
class TokenLookup {
 public:
  explicit TokenLookup(const EmbeddingStore& store);

  // One row per token. `sentence_index` addresses contextual stores and names
  // the sentence in lookup errors.
  Matrix embed(const TokenizedSentence& sentence, std::size_t sentence_index) const;
  const EmbeddingStore& store() const { return *store_; }

 private:
  const EmbeddingStore* store_;
};

}  // namespace uscore
