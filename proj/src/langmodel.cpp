#include "uscore/langmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"
#include "uscore/corpusio.hpp"
#include "uscore/error.hpp"

namespace uscore::langmodel {

namespace {

constexpr std::array<char, 4> kMagic = {'U', 'S', 'L', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr int kMaxOrder = 16;

bool reserved(std::string_view token) { return token == kUnk || token == kBos || token == kEos; }

}  // namespace

Smoothing parse_smoothing(std::string_view spec) {
  if (spec == "witten-bell") return Smoothing::witten_bell();
  if (spec == "add-one") return Smoothing::add_k(1.0);
  if (spec.starts_with("add-k:")) {
    const auto k = parse_double(std::string(spec.substr(6)));
    if (!k || *k < 0.0) throw ArgumentError("add-k needs a non-negative k, got '" + std::string(spec) + "'");
    return Smoothing::add_k(*k);
  }
  throw ArgumentError("unknown smoothing '" + std::string(spec) + "' (witten-bell, add-one, add-k:<k>)");
}

std::string to_string(const Smoothing& smoothing) {
  if (smoothing.kind == SmoothingKind::kWittenBell) return "witten-bell";
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << "add-k:" << smoothing.k;
  return s.str();
}

std::vector<std::string> NGramModel::vocabulary() const { return {words_.begin() + 3, words_.end()}; }

NGramModel::Id NGramModel::id(std::string_view token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() || it->second == kBosId ? kUnkId : it->second;
}

double NGramModel::interpolate(const Context& history, std::size_t length, Id word) const {
  const double lower = length == 0 ? 1.0 / static_cast<double>(outcome_count())
                                   : interpolate(history, length - 1, word);
  const Context context(history.end() - static_cast<std::ptrdiff_t>(length), history.end());
  const auto it = tables_[length].find(context);
  if (it == tables_[length].end() || it->second.total == 0) return lower;
  const Entry& e = it->second;
  const auto hit = e.next.find(word);
  const double c = hit == e.next.end() ? 0.0 : static_cast<double>(hit->second);
  const double total = static_cast<double>(e.total);
  if (smoothing_.kind == SmoothingKind::kWittenBell) {
    const double types = static_cast<double>(e.next.size());
    return (c + types * lower) / (total + types);
  }
  const double k = smoothing_.k;
  return (c + k) / (total + k * static_cast<double>(outcome_count()));
}

double NGramModel::probability_ids(const std::vector<Id>& context, Id word) const {
  if (word == kBosId || word >= words_.size()) throw ArgumentError("not a predictable outcome: id " + std::to_string(word));
  const auto h = static_cast<std::size_t>(order_ - 1);
  Context history(h, kBosId);
  const std::size_t take = std::min(h, context.size());
  std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(),
            history.end() - static_cast<std::ptrdiff_t>(take));
  return interpolate(history, h, word);
}

double NGramModel::probability(const std::vector<std::string>& context, std::string_view word) const {
  std::vector<Id> ids;
  ids.reserve(context.size());
  for (const auto& t : context) ids.push_back(id(t));
  return probability_ids(ids, id(word));
}

double NGramModel::word_probability(const std::vector<std::string>& context, std::string_view word) const {
  if (word == kEos) throw ArgumentError("word_probability excludes the end-of-sentence outcome");
  return probability(context, word) / (1.0 - probability(context, kEos));
}

NGramModel train_ngram(const std::vector<TokenizedSentence>& corpus, int order, Smoothing smoothing,
                       const std::optional<std::set<std::string>>& vocabulary) {
  if (corpus.empty()) throw ArgumentError("cannot train a language model on an empty corpus");
  if (order < 1 || order > kMaxOrder) throw ArgumentError("n-gram order must be in [1, 16]");
  if (smoothing.kind == SmoothingKind::kAddK && !(smoothing.k >= 0.0 && std::isfinite(smoothing.k))) {
    throw ArgumentError("add-k needs a finite non-negative k");
  }

  std::set<std::string> vocab;
  if (vocabulary) {
    vocab = *vocabulary;
  } else {
    for (const auto& s : corpus) vocab.insert(s.tokens.begin(), s.tokens.end());
  }
  for (const auto r : {kUnk, kBos, kEos}) vocab.erase(std::string(r));

  NGramModel m;
  m.order_ = order;
  m.smoothing_ = smoothing;
  m.words_ = {std::string(kUnk), std::string(kEos), std::string(kBos)};
  m.words_.insert(m.words_.end(), vocab.begin(), vocab.end());
  for (NGramModel::Id i = 0; i < m.words_.size(); ++i) m.ids_.emplace(m.words_[i], i);
  m.tables_.resize(static_cast<std::size_t>(order));

  const auto h = static_cast<std::size_t>(order - 1);
  for (const auto& s : corpus) {
    std::vector<NGramModel::Id> seq(h, NGramModel::kBosId);
    for (const auto& t : s.tokens) seq.push_back(reserved(t) ? NGramModel::kUnkId : m.id(t));
    seq.push_back(NGramModel::kEosId);
    for (std::size_t p = h; p < seq.size(); ++p) {
      for (std::size_t len = 0; len <= h; ++len) {
        NGramModel::Context ctx(seq.begin() + static_cast<std::ptrdiff_t>(p - len),
                                seq.begin() + static_cast<std::ptrdiff_t>(p));
        auto& e = m.tables_[len][std::move(ctx)];
        ++e.next[seq[p]];
        ++e.total;
      }
    }
  }
  return m;
}

double lm_score(const NGramModel& model, const TokenizedSentence& sentence) {
  if (sentence.tokens.empty()) throw ArgumentError("cannot score an empty sentence");
  std::vector<NGramModel::Id> seq;
  seq.reserve(sentence.tokens.size() + 1);
  for (const auto& t : sentence.tokens) seq.push_back(reserved(t) ? NGramModel::kUnkId : model.id(t));
  seq.push_back(NGramModel::kEosId);
  double sum = 0.0;
  std::vector<NGramModel::Id> context;
  for (const auto w : seq) {
    sum += std::log(model.probability_ids(context, w));
    context.push_back(w);
  }
  return sum / static_cast<double>(seq.size());
}

void save_model(const NGramModel& model, const std::filesystem::path& path) {
  using detail::put_le;
  std::string out(kMagic.begin(), kMagic.end());
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(model.order_));
  put_le(out, static_cast<std::uint8_t>(model.smoothing_.kind));
  put_le(out, std::bit_cast<std::uint64_t>(model.smoothing_.k));
  put_le(out, static_cast<std::uint32_t>(model.words_.size() - 3));
  for (std::size_t i = 3; i < model.words_.size(); ++i) {
    put_le(out, static_cast<std::uint32_t>(model.words_[i].size()));
    out += model.words_[i];
  }
  for (const auto& table : model.tables_) {
    put_le(out, static_cast<std::uint64_t>(table.size()));
    for (const auto& [ctx, e] : table) {
      for (const auto id : ctx) put_le(out, id);
      put_le(out, static_cast<std::uint32_t>(e.next.size()));
      for (const auto& [w, c] : e.next) {
        put_le(out, w);
        put_le(out, c);
      }
    }
  }
  detail::write_all(path, out);
}

NGramModel load_model(const std::filesystem::path& path) {
  const std::string bytes = detail::read_all(path);
  const std::string where = path.string();
  detail::Reader r(bytes, where);
  if (r.get_bytes(4) != std::string(kMagic.begin(), kMagic.end())) throw FormatError(where + ": not a USLM model file");
  if (r.get<std::uint16_t>() != kVersion) throw FormatError(where + ": unsupported model version");
  NGramModel m;
  m.order_ = static_cast<int>(r.get<std::uint32_t>());
  if (m.order_ < 1 || m.order_ > kMaxOrder) throw FormatError(where + ": bad n-gram order");
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw FormatError(where + ": bad smoothing tag");
  m.smoothing_ = {static_cast<SmoothingKind>(kind), std::bit_cast<double>(r.get<std::uint64_t>())};
  const auto vocab_size = r.get<std::uint32_t>();
  m.words_ = {std::string(kUnk), std::string(kEos), std::string(kBos)};
  for (std::uint32_t i = 0; i < vocab_size; ++i) m.words_.push_back(r.get_bytes(r.get<std::uint32_t>()));
  for (NGramModel::Id i = 0; i < m.words_.size(); ++i) {
    if (!m.ids_.emplace(m.words_[i], i).second) throw FormatError(where + ": duplicate vocabulary entry");
  }
  m.tables_.resize(static_cast<std::size_t>(m.order_));
  const auto limit = static_cast<NGramModel::Id>(m.words_.size());
  for (std::size_t len = 0; len < m.tables_.size(); ++len) {
    const auto contexts = r.get<std::uint64_t>();
    for (std::uint64_t c = 0; c < contexts; ++c) {
      NGramModel::Context ctx(len);
      for (auto& id : ctx) id = r.get<NGramModel::Id>();
      NGramModel::Entry e;
      const auto n = r.get<std::uint32_t>();
      for (std::uint32_t k = 0; k < n; ++k) {
        const auto w = r.get<NGramModel::Id>();
        const auto count = r.get<std::uint64_t>();
        if (w >= limit || w == NGramModel::kBosId) throw FormatError(where + ": bad outcome id");
        e.next[w] = count;
        e.total += count;
      }
      m.tables_[len].emplace(std::move(ctx), std::move(e));
    }
  }
  if (!r.done()) throw FormatError(where + ": trailing bytes");
  return m;
}

std::map<std::size_t, double> load_external_scores(const std::filesystem::path& path,
                                                   std::optional<std::size_t> expected_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::size_t, double> scores;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) throw ParseError(path.string() + ":" + std::to_string(row) + ": expected index<TAB>score", row);
    std::size_t index = 0;
    const auto& f = fields[0];
    if (f.empty() || !std::all_of(f.begin(), f.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      throw ParseError(path.string() + ":" + std::to_string(row) + ": bad index '" + f + "'", row);
    }
    index = std::stoull(f);
    const auto score = parse_double(fields[1]);
    if (!score) throw ParseError(path.string() + ":" + std::to_string(row) + ": bad score '" + fields[1] + "'", row);
    if (!scores.emplace(index, *score).second) {
      throw FormatError(path.string() + ": duplicate index " + std::to_string(index));
    }
  }
  const std::size_t n = expected_count.value_or(scores.empty() ? 0 : scores.rbegin()->first + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!scores.contains(i)) throw FormatError(path.string() + ": missing score for index " + std::to_string(i));
  }
  if (!scores.empty() && scores.rbegin()->first >= n) {
    throw FormatError(path.string() + ": index " + std::to_string(scores.rbegin()->first) + " beyond " +
                      std::to_string(n) + " hypotheses");
  }
  return scores;
}

void write_scores(const std::filesystem::path& path, const std::vector<double>& scores) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < scores.size(); ++i) out << i << '\t' << scores[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore::langmodel
