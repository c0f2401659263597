#include "uscore/sentembed.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "uscore/error.hpp"
#include "uscore/random.hpp"

namespace uscore::sentembed {

DenominatorMode parse_denominator_mode(std::string_view name) {
  if (name == "exclude-positive") return DenominatorMode::kExcludePositive;
  if (name == "include-positive") return DenominatorMode::kIncludePositive;
  throw ArgumentError("unknown denominator mode '" + std::string(name) + "'");
}

std::string_view to_string(DenominatorMode mode) {
  return mode == DenominatorMode::kExcludePositive ? "exclude-positive" : "include-positive";
}

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (batch_size < 2) throw ArgumentError("batch size must be at least 2");
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be non-negative");
  if (epochs_per_iteration < 1) throw ArgumentError("epochs per iteration must be at least 1");
}

SentenceProjection SentenceProjection::identity(std::size_t dimension) {
  const auto d = static_cast<Eigen::Index>(dimension);
  return {Matrix::Identity(d, d), {}};
}

Vector pool_sentence(const Matrix& token_embeddings) {
  if (token_embeddings.rows() == 0) throw ArgumentError("cannot pool an empty sentence");
  return token_embeddings.colwise().mean().transpose();
}

Vector pooled_embedding(const EmbeddingStore& store, const TokenizedSentence& sentence, std::size_t index) {
  if (store.kind() == StoreKind::kSentence) {
    const auto row = store.find(sentence_key(index));
    if (!row) throw LookupError("no sentence embedding for sentence " + std::to_string(index));
    return store.row(*row);
  }
  return pool_sentence(TokenLookup(store).embed(sentence, index));
}

Matrix pool_corpus(const std::vector<TokenizedSentence>& sentences, const EmbeddingStore& store) {
  Matrix out(static_cast<Eigen::Index>(sentences.size()), static_cast<Eigen::Index>(store.dimension()));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = pooled_embedding(store, sentences[i], i).transpose();
  }
  return out;
}

double cosine_score(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ArgumentError("cosine of vectors with different dimensions");
  const double nx = x.norm();
  const double ny = y.norm();
  if (!(nx > 0.0) || !(ny > 0.0)) throw ArgumentError("cosine of a zero vector");
  return std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
}

LossResult contrastive_loss(const Matrix& batch_x, const Matrix& batch_y, const Matrix& projection,
                            const ContrastiveConfig& config) {
  if (!(config.temperature > 0.0)) throw ArgumentError("temperature must be positive");
  const Eigen::Index n = batch_x.rows();
  if (n < 2) throw ArgumentError("contrastive batch needs at least two pairs");
  if (batch_y.rows() != n || batch_x.cols() != batch_y.cols()) throw ArgumentError("batch shapes differ");
  if (projection.cols() != batch_x.cols()) throw ArgumentError("projection does not match embedding dimension");

  const Matrix a = batch_x * projection.transpose();
  const Matrix b = batch_y * projection.transpose();
  const Vector a_norm = a.rowwise().norm();
  const Vector b_norm = b.rowwise().norm();
  if (!(a_norm.minCoeff() > 0.0) || !(b_norm.minCoeff() > 0.0)) {
    throw ArgumentError("projected sentence embedding has zero norm");
  }
  const Matrix a_hat = a_norm.cwiseInverse().asDiagonal() * a;
  const Matrix b_hat = b_norm.cwiseInverse().asDiagonal() * b;
  const double inv_tau = 1.0 / config.temperature;
  const Matrix logits = (a_hat * b_hat.transpose()) * inv_tau;
  const bool include = config.denominator_mode == DenominatorMode::kIncludePositive;

  LossResult result;
  result.per_item.resize(static_cast<std::size_t>(n));
  Matrix g_logits = Matrix::Zero(n, n);  // d(loss)/d(logits)
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (include || j != i) mx = std::max(mx, logits(i, j));
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (include || j != i) z += std::exp(logits(i, j) - mx);
    }
    const double log_z = mx + std::log(z);
    const double li = log_z - logits(i, i);
    result.per_item[static_cast<std::size_t>(i)] = li;
    result.loss += li;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (include || j != i) g_logits(i, j) += std::exp(logits(i, j) - log_z);
    }
    g_logits(i, i) -= 1.0;
  }
  result.loss /= static_cast<double>(n);
  g_logits /= static_cast<double>(n);

  // Back through the cosine and the row normalization.
  const Matrix g_a_hat = (g_logits * b_hat) * inv_tau;
  const Matrix g_b_hat = (g_logits.transpose() * a_hat) * inv_tau;
  Matrix g_a(n, a.cols());
  Matrix g_b(n, b.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    g_a.row(i) = (g_a_hat.row(i) - g_a_hat.row(i).dot(a_hat.row(i)) * a_hat.row(i)) / a_norm[i];
    g_b.row(i) = (g_b_hat.row(i) - g_b_hat.row(i).dot(b_hat.row(i)) * b_hat.row(i)) / b_norm[i];
  }
  result.gradient = g_a.transpose() * batch_x + g_b.transpose() * batch_y;
  return result;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  random::Engine rng(seed);
  random::shuffle(order, rng);
  return order;
}

SentenceProjection train_projection(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    const Matrix& source, const Matrix& target, const SentenceProjection& init,
                                    const ContrastiveConfig& config) {
  config.validate();
  if (!config.seed) throw ArgumentError("contrastive training requires a shuffle seed");
  if (pairs.size() < config.batch_size) {
    throw ArgumentError("contrastive training needs at least one full batch (" + std::to_string(config.batch_size) +
                        " pairs), got " + std::to_string(pairs.size()));
  }
  if (init.p.cols() != source.cols() || source.cols() != target.cols()) {
    throw ArgumentError("projection does not match embedding dimension");
  }
  for (const auto& [s, t] : pairs) {
    if (s >= static_cast<std::size_t>(source.rows()) || t >= static_cast<std::size_t>(target.rows())) {
      throw ArgumentError("training pair index out of range");
    }
  }

  SentenceProjection out = init;
  Matrix m1 = Matrix::Zero(out.p.rows(), out.p.cols());
  Matrix m2 = Matrix::Zero(out.p.rows(), out.p.cols());
  random::Engine rng(*config.seed);
  std::vector<std::size_t> order(pairs.size());
  long step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs_per_iteration; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    random::shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t size = std::min(config.batch_size, order.size() - begin);
      if (size < 2) break;
      Matrix bx(static_cast<Eigen::Index>(size), source.cols());
      Matrix by(static_cast<Eigen::Index>(size), target.cols());
      for (std::size_t r = 0; r < size; ++r) {
        const auto& [s, t] = pairs[order[begin + r]];
        bx.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(s));
        by.row(static_cast<Eigen::Index>(r)) = target.row(static_cast<Eigen::Index>(t));
      }
      const LossResult lr = contrastive_loss(bx, by, out.p, config);
      out.loss_log.push_back(lr.loss);
      ++step;
      // AdamW: decoupled decay, then bias-corrected adaptive step.
      out.p *= 1.0 - config.learning_rate * config.weight_decay;
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * lr.gradient;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * lr.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      out.p.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_epsilon);
    }
  }
  return out;
}

SentenceProjection train_projection(const std::vector<ScoredPair>& pairs, const EmbeddingStore& source_store,
                                    const EmbeddingStore& target_store, const SentenceProjection& init,
                                    const ContrastiveConfig& config) {
  std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
  const bool indexed = source_store.kind() != StoreKind::kStaticWord || target_store.kind() != StoreKind::kStaticWord;
  Matrix xs(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(source_store.dimension()));
  Matrix ys(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(target_store.dimension()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const ScoredPair& p = pairs[k];
    if (indexed && (!p.source_index || !p.target_index)) {
      throw ArgumentError("pairs need sentence indices to address contextual or sentence stores");
    }
    xs.row(static_cast<Eigen::Index>(k)) = pooled_embedding(source_store, p.source, p.source_index.value_or(k)).transpose();
    ys.row(static_cast<Eigen::Index>(k)) = pooled_embedding(target_store, p.target, p.target_index.value_or(k)).transpose();
    index_pairs.emplace_back(k, k);
  }
  return train_projection(index_pairs, xs, ys, init, config);
}

void save_projection(const SentenceProjection& projection, const std::filesystem::path& path) {
  std::vector<std::string> keys;
  for (Eigen::Index r = 0; r < projection.p.rows(); ++r) keys.push_back(std::to_string(r));
  save_binary(EmbeddingStore::from_matrix(StoreKind::kSentenceProjection, std::move(keys), projection.p), path);
}

SentenceProjection load_projection(const std::filesystem::path& path) {
  const EmbeddingStore store = load_embedding_store(path);
  if (store.kind() != StoreKind::kSentenceProjection) {
    throw FormatError(path.string() + ": not a sentence-projection store");
  }
  return {store.matrix(), {}};
}

void write_loss_log(const SentenceProjection& projection, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "step\tloss\n";
  for (std::size_t i = 0; i < projection.loss_log.size(); ++i) out << i << '\t' << projection.loss_log[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore::sentembed
