#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "uscore/error.hpp"
#include "uscore/sentembed.hpp"
#include "uscore/store.hpp"
#include "uscore/tokenizer.hpp"

using namespace uscore;
using namespace uscore::sentembed;
using uscore::testing::finite_difference;
using uscore::testing::random_matrix;
using uscore::testing::reference_contrastive_loss;
using uscore::testing::scratch_dir;

namespace {

Matrix rows2(std::initializer_list<std::pair<double, double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [a, b] : values) {
    m(i, 0) = a;
    m(i, 1) = b;
    ++i;
  }
  return m;
}

ContrastiveConfig config_with(DenominatorMode mode, double tau = 0.05) {
  ContrastiveConfig c;
  c.denominator_mode = mode;
  c.temperature = tau;
  c.seed = 1;
  return c;
}

// Largest per-entry relative error, with entries below `floor` compared on the floor's scale.
double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("pooling is the token mean") {
  const Vector m = pool_sentence(rows2({{1, 0}, {0, 1}}));
  CHECK(m[0] == 0.5);
  CHECK(m[1] == 0.5);
  CHECK(pool_sentence(rows2({{3, -2}})) == rows2({{3, -2}}).row(0).transpose());
  CHECK(pool_sentence(rows2({{0.1, 0.7}, {0.1, 0.7}, {0.1, 0.7}})).isApprox(Vector(rows2({{0.1, 0.7}}).row(0))));
  CHECK_THROWS_AS(pool_sentence(Matrix(0, 2)), ArgumentError);
}

TEST_CASE("pooled embeddings from word and sentence stores") {
  const auto words = EmbeddingStore::from_matrix(StoreKind::kStaticWord, {"a", "b"}, rows2({{1, 0}, {0, 1}}));
  const auto sents = EmbeddingStore::from_matrix(StoreKind::kSentence, {"0", "1"}, rows2({{2, 2}, {5, 6}}));
  const auto s = make_sentence("a b");
  CHECK(pooled_embedding(words, s, 0)[0] == 0.5);
  CHECK(pooled_embedding(sents, s, 1)[1] == 6.0);
  const Matrix corpus = pool_corpus({s, make_sentence("b")}, words);
  CHECK(corpus.rows() == 2);
  CHECK(corpus(1, 1) == 1.0);
  CHECK_THROWS_AS(pooled_embedding(sents, s, 2), LookupError);
}

TEST_CASE("cosine score") {
  Vector v(3);
  v << 1, -2, 0.5;
  CHECK(std::abs(cosine_score(v, v) - 1.0) <= 1e-15);
  CHECK(std::abs(cosine_score(v, -v) + 1.0) <= 1e-15);
  CHECK(std::abs(cosine_score(Vector::Unit(2, 0), Vector::Ones(2)) - std::sqrt(0.5)) <= 1e-15);
  CHECK_THROWS_AS(cosine_score(v, Vector::Zero(3)), ArgumentError);
  CHECK_THROWS_AS(cosine_score(v, Vector::Ones(2)), ArgumentError);
}

TEST_CASE("cosine is invariant to positive scaling") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Vector x = random_matrix(rng, 7, 1).col(0);
    const Vector y = random_matrix(rng, 7, 1).col(0);
    const double a = 0.01 + static_cast<double>(rng() % 1000) / 10.0;
    const double b = 0.01 + static_cast<double>(rng() % 1000) / 10.0;
    CHECK(std::abs(cosine_score(a * x, b * y) - cosine_score(x, y)) <= 1e-12);
  }
}

TEST_CASE("exclude-positive loss on an orthogonal pair of matches") {
  const Matrix x = rows2({{1, 0}, {0, 1}});
  const auto r = contrastive_loss(x, x, Matrix::Identity(2, 2), config_with(DenominatorMode::kExcludePositive));
  REQUIRE(r.per_item.size() == 2);
  CHECK(std::abs(r.per_item[0] + 20.0) <= 1e-12);
  CHECK(std::abs(r.loss + 20.0) <= 1e-12);
}

TEST_CASE("include-positive loss of equal cosines is log N") {
  for (const Eigen::Index n : {2, 3, 7}) {
    const Matrix x = Matrix::Ones(n, 4);
    const auto r = contrastive_loss(x, x, Matrix::Identity(4, 4), config_with(DenominatorMode::kIncludePositive));
    for (const double l : r.per_item) CHECK(std::abs(l - std::log(static_cast<double>(n))) <= 1e-12);
  }
}

TEST_CASE("loss matches the reference definition") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const bool include = t % 2 == 0;
    const Matrix x = random_matrix(rng, 5, 6);
    const Matrix y = random_matrix(rng, 5, 6);
    const Matrix p = random_matrix(rng, 6, 6);
    const auto mode = include ? DenominatorMode::kIncludePositive : DenominatorMode::kExcludePositive;
    const auto r = contrastive_loss(x, y, p, config_with(mode, 0.1));
    CHECK(std::abs(r.loss - reference_contrastive_loss(x, y, p, 0.1, include)) <= 1e-10);
    if (include) {
      for (const double l : r.per_item) CHECK(l >= 0.0);
    }
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int t = 0; t < 24; ++t) {
    const bool include = t % 2 == 0;
    const Eigen::Index d = t < 4 ? 8 : 2 + t % 7;
    const Eigen::Index n = t < 4 ? 4 : 2 + t % 5;
    const double tau = t < 4 ? 0.05 : 0.05 + 0.1 * (t % 4);
    const Matrix x = random_matrix(rng, n, d);
    const Matrix y = random_matrix(rng, n, d);
    const Matrix p = Matrix::Identity(d, d) + random_matrix(rng, d, d, 0.3);
    const auto mode = include ? DenominatorMode::kIncludePositive : DenominatorMode::kExcludePositive;
    const auto r = contrastive_loss(x, y, p, config_with(mode, tau));
    const Matrix numeric = finite_difference(
        [&](const Matrix& q) { return reference_contrastive_loss(x, y, q, tau, include); }, p, 1e-5);
    const double err = max_relative_error(r.gradient, numeric, 1e-8);
    CHECK(err <= 1e-4);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative gradient error " << worst);
}

TEST_CASE("loss errors") {
  const Matrix x = rows2({{1, 0}, {0, 1}});
  const auto c = config_with(DenominatorMode::kExcludePositive);
  CHECK_THROWS_AS(contrastive_loss(x, rows2({{1, 0}, {0, 0}}), Matrix::Identity(2, 2), c), ArgumentError);
  CHECK_THROWS_AS(contrastive_loss(x.topRows(1), x.topRows(1), Matrix::Identity(2, 2), c), ArgumentError);
  CHECK_THROWS_AS(contrastive_loss(x, x.topRows(1), Matrix::Identity(2, 2), c), ArgumentError);
  ContrastiveConfig bad = c;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = c;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  CHECK(parse_denominator_mode("include-positive") == DenominatorMode::kIncludePositive);
  CHECK(to_string(DenominatorMode::kExcludePositive) == "exclude-positive");
  CHECK_THROWS_AS(parse_denominator_mode("both"), ArgumentError);
}

TEST_CASE("zero learning rate leaves the projection unchanged") {
  std::mt19937_64 rng(4);
  const Matrix src = random_matrix(rng, 20, 5);
  const Matrix tgt = random_matrix(rng, 20, 5);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < 20; ++i) pairs.emplace_back(i, i);
  auto c = config_with(DenominatorMode::kExcludePositive);
  c.batch_size = 8;
  c.learning_rate = 0.0;
  c.weight_decay = 0.5;
  const auto out = train_projection(pairs, src, tgt, SentenceProjection::identity(5), c);
  CHECK(out.p == Matrix::Identity(5, 5));
  CHECK(out.loss_log.size() == 3);
}

TEST_CASE("untrained projection reproduces raw pooled cosines") {
  std::mt19937_64 rng(5);
  const auto id = SentenceProjection::identity(6);
  for (int t = 0; t < 50; ++t) {
    const Vector x = random_matrix(rng, 6, 1).col(0);
    const Vector y = random_matrix(rng, 6, 1).col(0);
    CHECK(cosine_score(id.apply(x), id.apply(y)) == cosine_score(x, y));
  }
}

TEST_CASE("repeated batch training lowers the loss") {
  std::mt19937_64 rng(6);
  const Matrix src = random_matrix(rng, 8, 6);
  const Matrix tgt = random_matrix(rng, 8, 6);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < 8; ++i) pairs.emplace_back(i, i);
  auto c = config_with(DenominatorMode::kIncludePositive);
  c.batch_size = 8;
  c.epochs_per_iteration = 100;
  c.learning_rate = 1e-2;
  const auto out = train_projection(pairs, src, tgt, SentenceProjection::identity(6), c);
  REQUIRE(out.loss_log.size() == 100);
  CHECK(out.loss_log.back() < out.loss_log.front());
  const double final_loss = contrastive_loss(src, tgt, out.p, c).loss;
  CHECK(final_loss < out.loss_log.front());
}

TEST_CASE("training is seeded and reproducible") {
  std::mt19937_64 rng(7);
  const Matrix src = random_matrix(rng, 40, 4);
  const Matrix tgt = random_matrix(rng, 40, 4);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < 40; ++i) pairs.emplace_back(i, (i * 7) % 40);
  auto c = config_with(DenominatorMode::kExcludePositive);
  c.batch_size = 16;
  c.learning_rate = 1e-2;
  const auto a = train_projection(pairs, src, tgt, SentenceProjection::identity(4), c);
  const auto b = train_projection(pairs, src, tgt, SentenceProjection::identity(4), c);
  CHECK(a.p == b.p);
  CHECK(a.loss_log == b.loss_log);
  c.seed = 2;
  CHECK(train_projection(pairs, src, tgt, SentenceProjection::identity(4), c).p != a.p);
  c.seed.reset();
  CHECK_THROWS_AS(train_projection(pairs, src, tgt, SentenceProjection::identity(4), c), ArgumentError);
  c.seed = 1;
  c.batch_size = 41;
  CHECK_THROWS_AS(train_projection(pairs, src, tgt, SentenceProjection::identity(4), c), ArgumentError);
}

TEST_CASE("seeded permutation is a fixed permutation") {
  const auto p = seeded_permutation(10, 42);
  CHECK(p == seeded_permutation(10, 42));
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
  CHECK(p != seeded_permutation(10, 43));
}

TEST_CASE("training over mined pairs needs indices for sentence stores") {
  const auto sents = EmbeddingStore::from_matrix(StoreKind::kSentence, {"0", "1", "2"},
                                                 rows2({{1, 0}, {0, 1}, {1, 1}}));
  std::vector<ScoredPair> pairs = {{make_sentence("a"), make_sentence("b"), 1.0, 0, 1},
                                   {make_sentence("c"), make_sentence("d"), 1.0, 1, 2}};
  auto c = config_with(DenominatorMode::kExcludePositive);
  c.batch_size = 2;
  c.learning_rate = 1e-2;
  CHECK(train_projection(pairs, sents, sents, SentenceProjection::identity(2), c).loss_log.size() == 1);
  pairs[1].target_index.reset();
  CHECK_THROWS_AS(train_projection(pairs, sents, sents, SentenceProjection::identity(2), c), ArgumentError);
}

TEST_CASE("projection and loss log persist") {
  std::mt19937_64 rng(8);
  SentenceProjection p{random_matrix(rng, 4, 4), {0.5, 0.25}};
  const auto dir = scratch_dir("sentembed_persist");
  save_projection(p, dir / "p.useb");
  const auto back = load_projection(dir / "p.useb");
  CHECK((back.p - p.p).cwiseAbs().maxCoeff() <= 1e-6);
  write_loss_log(p, dir / "loss.tsv");
  std::ifstream in(dir / "loss.tsv");
  std::string header;
  std::string first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "step\tloss");
  CHECK(first == "0\t0.5");
}
