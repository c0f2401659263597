#include "uscore/store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "binio.hpp"
#include "uscore/error.hpp"
#include "uscore/manifest.hpp"

namespace uscore {

using detail::put_f32;
using detail::put_le;
using detail::read_all;
using detail::Reader;
using detail::write_all;

namespace {

constexpr std::array<char, 4> kMagic = {'U', 'S', 'E', 'B'};
constexpr std::uint16_t kVersion = 1;

EmbeddingStore read_binary(const std::string& bytes, const std::string& path) {
  Reader r(bytes, path);
  if (r.get_bytes(4) != std::string(kMagic.begin(), kMagic.end())) throw FormatError(path + ": bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  const auto kind_tag = r.get<std::uint8_t>();
  if (kind_tag > static_cast<std::uint8_t>(StoreKind::kSentenceProjection)) {
    throw FormatError(path + ": unknown kind tag " + std::to_string(kind_tag));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dim == 0) throw FormatError(path + ": zero dimension");
  EmbeddingStore store(static_cast<StoreKind>(kind_tag), dim);
  Vector v(dim);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = r.get<std::uint32_t>();
    std::string key = r.get_bytes(len);
    if (!is_valid_utf8(key)) throw FormatError(path + ": entry " + std::to_string(e) + " key is not UTF-8");
    for (std::uint32_t k = 0; k < dim; ++k) v[k] = r.get_f32();
    store.add(std::move(key), v);
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes after " + std::to_string(count) + " entries");
  return store;
}

EmbeddingStore read_text(const std::string& bytes, const std::string& path) {
  std::istringstream in(bytes);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError(path + ": empty store file");
  std::istringstream header(line);
  long long count = -1;
  long long dim = -1;
  std::string kind_name;
  header >> count >> dim;
  if (!header || count < 0 || dim <= 0) throw FormatError(path + ": bad header, expected '<count> <dim>'");
  header >> kind_name;
  const StoreKind kind = kind_name.empty() ? StoreKind::kStaticWord : parse_store_kind(kind_name);
  EmbeddingStore store(kind, static_cast<std::size_t>(dim));
  Vector v(dim);
  long long seen = 0;
  while (next_line()) {
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw FormatError(path + ":" + std::to_string(lineno) + ": non-numeric component '" + tok + "'");
      }
      values.push_back(x);
    }
    if (static_cast<long long>(values.size()) != dim) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                        " components, found " + std::to_string(values.size()));
    }
    if (!is_valid_utf8(key)) throw FormatError(path + ":" + std::to_string(lineno) + ": key is not UTF-8");
    for (long long k = 0; k < dim; ++k) v[k] = values[static_cast<std::size_t>(k)];
    try {
      store.add(std::move(key), v);
    } catch (const ArgumentError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ++seen;
  }
  if (seen != count) {
    throw FormatError(path + ": header declares " + std::to_string(count) + " entries, found " + std::to_string(seen));
  }
  return store;
}

}  // namespace

std::string_view to_string(StoreKind kind) {
  switch (kind) {
    case StoreKind::kStaticWord: return "static-word";
    case StoreKind::kContextualToken: return "contextual-token";
    case StoreKind::kSentence: return "sentence";
    case StoreKind::kOrthogonalMap: return "orthogonal-map";
    case StoreKind::kBiasDirection: return "bias-direction";
    case StoreKind::kSentenceProjection: return "sentence-projection";
  }
  return "unknown";
}

StoreKind parse_store_kind(std::string_view name) {
  for (std::uint8_t t = 0; t <= static_cast<std::uint8_t>(StoreKind::kSentenceProjection); ++t) {
    if (to_string(static_cast<StoreKind>(t)) == name) return static_cast<StoreKind>(t);
  }
  throw FormatError("unknown store kind '" + std::string(name) + "'");
}

std::string contextual_key(std::size_t sentence, std::size_t token) {
  return std::to_string(sentence) + ":" + std::to_string(token);
}

std::string sentence_key(std::size_t sentence) { return std::to_string(sentence); }

EmbeddingStore::EmbeddingStore(StoreKind kind, std::size_t dimension) : kind_(kind), dim_(dimension) {
  if (dimension == 0) throw ArgumentError("embedding dimension must be positive");
}

EmbeddingStore EmbeddingStore::from_matrix(StoreKind kind, std::vector<std::string> keys, const Matrix& vectors) {
  if (static_cast<std::size_t>(vectors.rows()) != keys.size()) {
    throw ArgumentError("key count does not match vector rows");
  }
  EmbeddingStore store(kind, static_cast<std::size_t>(vectors.cols()));
  store.keys_.reserve(keys.size());
  store.data_.reserve(keys.size() * store.dim_);
  for (std::size_t i = 0; i < keys.size(); ++i) store.add(std::move(keys[i]), vectors.row(static_cast<Eigen::Index>(i)).transpose());
  return store;
}

void EmbeddingStore::add(std::string key, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw ArgumentError("vector for '" + key + "' has dimension " + std::to_string(v.size()) + ", store has " +
                        std::to_string(dim_));
  }
  if (!v.allFinite()) throw ArgumentError("vector for '" + key + "' has a non-finite component");
  if (index_.contains(key)) throw ArgumentError("duplicate key '" + key + "'");
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  data_.insert(data_.end(), v.data(), v.data() + v.size());
}

Eigen::Map<const Vector> EmbeddingStore::row(std::size_t i) const {
  return Eigen::Map<const Vector>(data_.data() + i * dim_, static_cast<Eigen::Index>(dim_));
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view key) const {
  const auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Matrix EmbeddingStore::matrix() const {
  Matrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = row(i).transpose();
  return m;
}

EmbeddingStore EmbeddingStore::with_vectors(const Matrix& vectors) const {
  if (static_cast<std::size_t>(vectors.rows()) != size()) throw ArgumentError("row count does not match store size");
  return from_matrix(kind_, keys_, vectors);
}

EmbeddingStore EmbeddingStore::with_kind(StoreKind kind) const {
  EmbeddingStore copy = *this;
  copy.kind_ = kind;
  return copy;
}

EmbeddingStore load_embedding_store(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    return read_binary(bytes, path.string());
  }
  // Anything that is not a text header with a leading digit is a foreign binary.
  if (bytes.empty() || !(std::isdigit(static_cast<unsigned char>(bytes[0])) || bytes[0] == ' ')) {
    throw FormatError(path.string() + ": bad magic (not a USEB binary or text store)");
  }
  return read_text(bytes, path.string());
}

void save_binary(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::string out(kMagic.begin(), kMagic.end());
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint8_t>(store.kind()));
  put_le(out, static_cast<std::uint32_t>(store.dimension()));
  put_le(out, static_cast<std::uint64_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& key = store.key(i);
    put_le(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    const auto v = store.row(i);
    for (Eigen::Index k = 0; k < v.size(); ++k) put_f32(out, v[k]);
  }
  write_all(path, out);
}

void save_text(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ostringstream out;
  out << store.size() << ' ' << store.dimension();
  if (store.kind() != StoreKind::kStaticWord) out << ' ' << to_string(store.kind());
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.key(i);
    const auto v = store.row(i);
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ' ' << v[k];
    out << '\n';
  }
  write_all(path, out.str());
}

std::string float_checksum(const EmbeddingStore& store) {
  std::string bytes;
  bytes.reserve(store.size() * store.dimension() * 4);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto v = store.row(i);
    for (Eigen::Index k = 0; k < v.size(); ++k) put_f32(bytes, v[k]);
  }
  return sha256_hex(bytes);
}

SidecarCheck check_sidecar(const EmbeddingStore& store, const std::filesystem::path& sidecar) {
  SidecarCheck check;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  const auto expect = [&](const char* field, const auto& actual) {
    if (!j.contains(field)) {
      check.problems.push_back(std::string("missing field ") + field);
    } else if (j[field] != actual) {
      check.problems.push_back(std::string(field) + " mismatch: sidecar " + j[field].dump() + ", store " +
                               nlohmann::json(actual).dump());
    }
  };
  expect("kind", std::string(to_string(store.kind())));
  expect("dimension", store.dimension());
  expect("count", store.size());
  expect("float_checksum_sha256", float_checksum(store));
  check.ok = check.problems.empty();
  return check;
}

TokenLookup::TokenLookup(const EmbeddingStore& store) : store_(&store) {
  if (store.kind() != StoreKind::kStaticWord && store.kind() != StoreKind::kContextualToken) {
    throw ArgumentError("token lookup needs a static-word or contextual-token store, got " +
                        std::string(to_string(store.kind())));
  }
}

Matrix TokenLookup::embed(const TokenizedSentence& sentence, std::size_t sentence_index) const {
  const std::size_t n = sentence.tokens.size();
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(store_->dimension()));
  const bool contextual = store_->kind() == StoreKind::kContextualToken;
  for (std::size_t t = 0; t < n; ++t) {
    const auto row =
        contextual ? store_->find(contextual_key(sentence_index, t)) : store_->find(sentence.tokens[t]);
    if (!row) {
      throw LookupError("no embedding for token '" + sentence.tokens[t] + "' (position " + std::to_string(t) +
                        ") in sentence " + std::to_string(sentence_index));
    }
    out.row(static_cast<Eigen::Index>(t)) = store_->row(*row).transpose();
  }
  return out;
}

}  // namespace uscore
