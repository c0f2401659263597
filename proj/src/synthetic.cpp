#include "uscore/synthetic.hpp"

#include <Eigen/QR>
#include <cmath>
#include <fstream>

#include "uscore/error.hpp"
#include "uscore/random.hpp"

namespace uscore::synthetic {

namespace {

std::string spell(std::size_t id, char first_letter) {
  std::string w(3, first_letter);
  for (std::size_t k = 3; k-- > 0;) {
    w[k] = static_cast<char>(first_letter + static_cast<char>(id % 13));
    id /= 13;
  }
  return w;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, random::Engine& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = random::normal(rng);
  }
  return m;
}

TokenizedSentence from_tokens(std::vector<std::string> tokens) {
  TokenizedSentence s;
  s.text = join_tokens(tokens);
  s.tokens = std::move(tokens);
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (dimension < 2 * planes || planes == 0) throw ArgumentError("need dimension >= 2 * planes and planes >= 1");
  if (vocabulary < 2 || vocabulary > 13 * 13 * 13) throw ArgumentError("vocabulary must lie in [2, 2197]");
  if (sentences < 1) throw ArgumentError("need at least one sentence");
  if (min_length < 1 || max_length < min_length) throw ArgumentError("bad sentence length range");
  if (!(noise >= 0.0) || !(mismatch_scale > 0.0)) throw ArgumentError("bad noise or scale");
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  random::Engine rng(config.seed);
  const auto d = static_cast<Eigen::Index>(config.dimension);
  const auto v = static_cast<Eigen::Index>(config.vocabulary);

  // Random basis; the first 2·planes basis vectors span the mismatch subspace.
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, d, rng));
  Matrix basis = qr.householderQ();
  const Vector diag = Matrix(qr.matrixQR()).diagonal();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (diag[k] < 0) basis.col(k) *= -1.0;
  }

  Vector scale = Vector::Ones(d);
  scale.head(static_cast<Eigen::Index>(2 * config.planes)).setConstant(config.mismatch_scale);
  const Matrix src_words = gaussian(v, d, rng) * scale.asDiagonal() * basis.transpose();

  Matrix block = Matrix::Identity(d, d);
  for (std::size_t p = 0; p < config.planes; ++p) {
    const double t = config.planes == 1 ? 0.0 : static_cast<double>(p) / static_cast<double>(config.planes - 1);
    const double angle = config.max_angle + t * (config.min_angle - config.max_angle);
    const auto i = static_cast<Eigen::Index>(2 * p);
    block(i, i) = std::cos(angle);
    block(i, i + 1) = -std::sin(angle);
    block(i + 1, i) = std::sin(angle);
    block(i + 1, i + 1) = std::cos(angle);
  }
  const Matrix rotation = basis * block * basis.transpose();
  const Matrix tgt_words = src_words * rotation.transpose() + config.noise * gaussian(v, d, rng);

  SynthData out{{}, {}, {}, EmbeddingStore(StoreKind::kStaticWord, config.dimension),
                EmbeddingStore(StoreKind::kStaticWord, config.dimension), rotation, {}};
  for (Eigen::Index w = 0; w < v; ++w) {
    out.source_store.add(spell(static_cast<std::size_t>(w), 'a'), src_words.row(w).transpose());
    out.target_store.add(spell(static_cast<std::size_t>(w), 'n'), tgt_words.row(w).transpose());
  }

  std::vector<std::vector<std::size_t>> ids(config.sentences);
  for (auto& s : ids) {
    const auto len = config.min_length + random::bounded(rng, config.max_length - config.min_length + 1);
    s.resize(len);
    for (auto& w : s) w = random::bounded(rng, config.vocabulary);
  }
  std::vector<std::size_t> order(config.sentences);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  random::shuffle(order, rng);  // order[t] = source sentence placed at target slot t
  out.gold.resize(config.sentences);
  std::vector<TokenizedSentence> target(config.sentences);
  for (std::size_t t = 0; t < order.size(); ++t) {
    auto words = ids[order[t]];
    random::shuffle(words, rng);
    std::vector<std::string> toks;
    for (const auto w : words) toks.push_back(spell(w, 'n'));
    target[t] = from_tokens(std::move(toks));
    out.gold[order[t]] = t;
  }
  for (const auto& s : ids) {
    std::vector<std::string> toks;
    for (const auto w : s) toks.push_back(spell(w, 'a'));
    out.source.push_back(from_tokens(std::move(toks)));
  }
  out.target = std::move(target);

  // Dev records: a translation with a random share of its words replaced; the
  // judgement is the share kept plus a little rater noise.
  for (std::size_t r = 0; r < config.dev_records; ++r) {
    const std::size_t i = random::bounded(rng, config.sentences);
    const double corrupt = random::uniform(rng);
    std::vector<std::string> toks;
    std::size_t replaced = 0;
    for (const auto w : ids[i]) {
      const bool swap = random::uniform(rng) < corrupt;
      replaced += swap ? 1 : 0;
      toks.push_back(spell(swap ? random::bounded(rng, config.vocabulary) : w, 'n'));
    }
    random::shuffle(toks, rng);
    const double kept = 1.0 - static_cast<double>(replaced) / static_cast<double>(ids[i].size());
    out.dev.push_back({out.source[i].text, join_tokens(toks), kept + 0.05 * random::normal(rng), std::nullopt});
  }
  return out;
}

void write_gold(const std::filesystem::path& path, const std::vector<std::size_t>& gold) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < gold.size(); ++i) out << i << '\t' << gold[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::size_t> load_gold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::size_t> gold;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const auto a = f.size() == 2 ? parse_double(f[0]) : std::nullopt;
    const auto b = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
    if (!a || !b || *a < 0 || *b < 0 || *a != std::floor(*a) || *b != std::floor(*b)) {
      throw ParseError(path.string() + ":" + std::to_string(row) + ": expected source_index<TAB>target_index", row);
    }
    if (static_cast<std::size_t>(*a) != gold.size()) {
      throw FormatError(path.string() + ": missing gold entry for index " + std::to_string(gold.size()));
    }
    gold.push_back(static_cast<std::size_t>(*b));
  }
  return gold;
}

std::vector<std::filesystem::path> write(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<std::filesystem::path> paths = {dir / "source.txt", dir / "target.txt", dir / "source.useb",
                                                    dir / "target.useb", dir / "gold.tsv",   dir / "dev.tsv"};
  write_corpus(paths[0], data.source);
  write_corpus(paths[1], data.target);
  save_binary(data.source_store, paths[2]);
  save_binary(data.target_store, paths[3]);
  write_gold(paths[4], data.gold);
  write_eval_dataset(paths[5], data.dev);
  return paths;
}

}  // namespace uscore::synthetic
