#include "uscore/remap.hpp"

#include <fstream>
#include <set>

#include "uscore/error.hpp"
#include "uscore/transport.hpp"

namespace uscore::remap {

namespace {

void check_pair_set(const WordPairSet& pairs) {
  if (pairs.source.rows() != pairs.target.rows() || pairs.source.cols() != pairs.target.cols()) {
    throw ArgumentError("source and target pair matrices differ in shape");
  }
  if (static_cast<std::size_t>(pairs.source.cols()) != pairs.pairs.size()) {
    throw ArgumentError("pair matrices have " + std::to_string(pairs.source.cols()) + " columns for " +
                        std::to_string(pairs.pairs.size()) + " pairs");
  }
}

void check_dimension(std::size_t d, const ProjectionMap& map) {
  if (d != map.dimension()) {
    throw ArgumentError("map dimension " + std::to_string(map.dimension()) + " does not match vectors of dimension " +
                        std::to_string(d));
  }
}

}  // namespace

std::size_t ProjectionMap::dimension() const {
  return static_cast<std::size_t>(kind == MapKind::kOrthogonal ? w.rows() : bias.size());
}

ProjectionMap fit_clp(const WordPairSet& pairs, const ClpOptions& options) {
  check_pair_set(pairs);
  if (pairs.size() == 0) throw ArgumentError("CLP needs at least one word pair");
  Matrix x = pairs.source;
  Matrix y = pairs.target;
  if (options.normalize) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (x.col(k).norm() > 0) x.col(k).normalize();
      if (y.col(k).norm() > 0) y.col(k).normalize();
    }
  }
  if (options.center) {
    x.colwise() -= x.rowwise().mean();
    y.colwise() -= y.rowwise().mean();
  }
  const Matrix cross = y * x.transpose();
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProjectionMap map;
  map.kind = MapKind::kOrthogonal;
  map.w = svd.matrixU() * svd.matrixV().transpose();
  const auto& sv = svd.singularValues();
  map.degenerate = sv.size() == 0 || sv[sv.size() - 1] <= 1e-12 * std::max(sv[0], 1e-300);
  map.underdetermined = pairs.size() < static_cast<std::size_t>(x.rows());
  return map;
}

ProjectionMap fit_umd(const WordPairSet& pairs) {
  check_pair_set(pairs);
  if (pairs.size() < 2) throw ArgumentError("UMD needs at least two word pairs");
  const Matrix q = (pairs.source - pairs.target).transpose();  // m x d, one difference per row
  if (q.cwiseAbs().maxCoeff() == 0.0) throw DegenerateInputError("UMD: every word pair has identical embeddings");
  Eigen::JacobiSVD<Matrix> svd(q, Eigen::ComputeThinV);
  Vector v = svd.matrixV().col(0);
  v.normalize();
  const double cutoff = 1e-12 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v[k]) > cutoff) {
      if (v[k] < 0) v = -v;
      break;
    }
  }
  ProjectionMap map;
  map.kind = MapKind::kBiasRemoval;
  map.bias = v;
  return map;
}

Side default_side(MapKind kind) { return kind == MapKind::kOrthogonal ? Side::kSource : Side::kBoth; }

Vector apply_remap(const Vector& e, const ProjectionMap& map) {
  check_dimension(static_cast<std::size_t>(e.size()), map);
  if (map.kind == MapKind::kOrthogonal) return map.w * e;
  return e - e.dot(map.bias) * map.bias;
}

EmbeddingStore apply_remap(const EmbeddingStore& store, const ProjectionMap& map) {
  check_dimension(store.dimension(), map);
  const Matrix m = store.matrix();
  Matrix out;
  if (map.kind == MapKind::kOrthogonal) {
    out = m * map.w.transpose();
  } else {
    out = m - (m * map.bias) * map.bias.transpose();
  }
  return store.with_vectors(out);
}

BilingualStores apply_remap(const BilingualStores& stores, const ProjectionMap& map, Side side) {
  return {side == Side::kTarget ? stores.source : apply_remap(stores.source, map),
          side == Side::kSource ? stores.target : apply_remap(stores.target, map)};
}

WordPairSet extract_word_pairs(const std::vector<ScoredPair>& pairs, const TokenLookup& source,
                               const TokenLookup& target, double min_flow) {
  if (source.store().dimension() != target.store().dimension()) {
    throw ArgumentError("source and target stores differ in dimension");
  }
  const auto d = static_cast<Eigen::Index>(source.store().dimension());
  const bool indexed =
      source.store().kind() != StoreKind::kStaticWord || target.store().kind() != StoreKind::kStaticWord;
  std::set<std::pair<std::string, std::string>> seen;
  WordPairSet out;
  std::vector<Vector> xs;
  std::vector<Vector> ys;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const ScoredPair& p = pairs[k];
    if (indexed && (!p.source_index || !p.target_index)) {
      throw ArgumentError("pairs need sentence indices to address contextual stores");
    }
    const Matrix x = source.embed(p.source, p.source_index.value_or(k));
    const Matrix y = target.embed(p.target, p.target_index.value_or(k));
    const auto result = transport::wmd(x, y);
    for (const auto& [i, j] : transport::align_indices_from_plan(result.plan, min_flow)) {
      auto key = std::pair{p.source.tokens[i], p.target.tokens[j]};
      if (!seen.insert(key).second) continue;
      out.pairs.push_back(std::move(key));
      xs.emplace_back(x.row(static_cast<Eigen::Index>(i)).transpose());
      ys.emplace_back(y.row(static_cast<Eigen::Index>(j)).transpose());
    }
  }
  out.source.resize(d, static_cast<Eigen::Index>(xs.size()));
  out.target.resize(d, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t c = 0; c < xs.size(); ++c) {
    out.source.col(static_cast<Eigen::Index>(c)) = xs[c];
    out.target.col(static_cast<Eigen::Index>(c)) = ys[c];
  }
  return out;
}

EmbeddingStore to_store(const ProjectionMap& map) {
  if (map.kind == MapKind::kOrthogonal) {
    std::vector<std::string> keys;
    for (Eigen::Index r = 0; r < map.w.rows(); ++r) keys.push_back(std::to_string(r));
    return EmbeddingStore::from_matrix(StoreKind::kOrthogonalMap, std::move(keys), map.w);
  }
  EmbeddingStore store(StoreKind::kBiasDirection, static_cast<std::size_t>(map.bias.size()));
  store.add("v_B", map.bias);
  return store;
}

ProjectionMap from_store(const EmbeddingStore& store) {
  ProjectionMap map;
  if (store.kind() == StoreKind::kOrthogonalMap) {
    if (store.size() != store.dimension()) throw FormatError("orthogonal map store must be square");
    map.kind = MapKind::kOrthogonal;
    // binary32 storage perturbs orthogonality; snap back to the nearest orthogonal matrix
    Eigen::JacobiSVD<Matrix> svd(store.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    map.w = svd.matrixU() * svd.matrixV().transpose();
  } else if (store.kind() == StoreKind::kBiasDirection) {
    if (store.size() != 1) throw FormatError("bias-direction store must hold exactly one vector");
    map.kind = MapKind::kBiasRemoval;
    map.bias = store.row(0);
    map.bias.normalize();
  } else {
    throw FormatError("store of kind " + std::string(to_string(store.kind())) + " is not a projection map");
  }
  return map;
}

void save_map(const ProjectionMap& map, const std::filesystem::path& path) { save_binary(to_store(map), path); }

ProjectionMap load_map(const std::filesystem::path& path) { return from_store(load_embedding_store(path)); }

void write_word_pairs(const std::filesystem::path& path, const WordPairSet& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [s, t] : pairs.pairs) out << s << '\t' << t << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore::remap
