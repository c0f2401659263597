#include "uscore/scorer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "uscore/corpusio.hpp"
#include "uscore/error.hpp"
#include "uscore/parallel.hpp"

namespace uscore::scorer {

namespace {

bool near(double a, double b) { return std::abs(a - b) <= 1e-9; }

}  // namespace

ScoreWeights ScoreWeights::from_preset(std::string_view name) {
  ScoreWeights w;
  w.preset = std::string(name);
  if (name == "tuned") return w;
  if (name == "plus") {
    w.w_xlng = 0.45;
    w.w_lm = 0.1;
    w.w_pseudo = 0.45;
    w.w_wrd = 0.5;
    w.w_snt = 0.5;
    return w;
  }
  if (name == "plusplus") {
    w.w_xlng = w.w_lm = w.w_pseudo = 1.0 / 3.0;
    w.w_wrd = w.w_snt = 0.5;
    return w;
  }
  throw ArgumentError("unknown preset '" + std::string(name) + "' (tuned, plus, plusplus)");
}

std::vector<std::string> preset_names() { return {"tuned", "plus", "plusplus"}; }

void ScoreWeights::validate() const {
  for (const double v : {w_xlng, w_lm, w_pseudo, w_wrd, w_snt}) {
    if (!std::isfinite(v)) throw ArgumentError("weights must be finite");
  }
  if (!near(w_wrd + w_snt, 1.0)) throw ArgumentError("w_wrd + w_snt must equal 1");
}

std::string ScoreWeights::header() const {
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << "#preset=" << preset << "\tw_xlng=" << w_xlng << "\tw_lm=" << w_lm << "\tw_pseudo=" << w_pseudo
    << "\tw_wrd=" << w_wrd << "\tw_snt=" << w_snt << "\tremap_iterations=" << remap_iterations
    << "\tnormalize=" << (normalize_components ? 1 : 0);
  return s.str();
}

double score_wrd(const WordInputs& in, const ScoreWeights& weights, const transport::WmdOptions& wmd) {
  double score = 0.0;
  if (weights.w_xlng != 0.0) score += weights.w_xlng * -transport::wmd(in.source, in.hypothesis, std::nullopt, wmd).distance;
  if (weights.w_lm != 0.0) score += weights.w_lm * in.lm;
  if (weights.w_pseudo != 0.0) {
    if (!in.pseudo_reference) throw ArgumentError("w_pseudo > 0 needs a pseudo reference");
    const Matrix& y = in.hypothesis_mono ? *in.hypothesis_mono : in.hypothesis;
    score += weights.w_pseudo * -transport::wmd(y, *in.pseudo_reference, std::nullopt, wmd).distance;
  }
  return score;
}

std::vector<double> score_wrd_batch(const std::vector<Segment>& batch, const WordStores& stores,
                                    const std::vector<double>& lm_scores, const ScoreWeights& weights,
                                    std::size_t workers, const transport::WmdOptions& wmd) {
  weights.validate();
  if (!stores.source || !stores.hypothesis) throw ArgumentError("word metric needs source and hypothesis stores");
  if (weights.w_lm != 0.0 && lm_scores.size() != batch.size()) {
    throw ArgumentError("expected " + std::to_string(batch.size()) + " LM scores, got " +
                        std::to_string(lm_scores.size()));
  }
  const EmbeddingStore* mono = stores.hypothesis_mono ? stores.hypothesis_mono : stores.hypothesis;
  const EmbeddingStore* pseudo = stores.pseudo_reference ? stores.pseudo_reference : mono;
  if (weights.w_pseudo != 0.0) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!batch[i].pseudo_reference) {
        throw ArgumentError("w_pseudo > 0 but segment " + std::to_string(i) + " has no pseudo reference");
      }
    }
  }
  const TokenLookup src(*stores.source);
  const TokenLookup hyp(*stores.hypothesis);
  const TokenLookup hyp_mono(*mono);
  const TokenLookup ref(*pseudo);
  std::vector<double> out(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const Segment& s = batch[i];
    WordInputs in;
    if (weights.w_xlng != 0.0) {
      in.source = src.embed(s.source, i);
      in.hypothesis = hyp.embed(s.hypothesis, i);
    }
    if (weights.w_lm != 0.0) in.lm = lm_scores[i];
    if (weights.w_pseudo != 0.0) {
      in.hypothesis_mono = hyp_mono.embed(s.hypothesis, i);
      in.pseudo_reference = ref.embed(*s.pseudo_reference, i);
    }
    out[i] = score_wrd(in, weights, wmd);
  });
  return out;
}

double score_snt(const Vector& pooled_x, const Vector& pooled_y, const sentembed::SentenceProjection& projection) {
  return sentembed::cosine_score(projection.apply(pooled_x), projection.apply(pooled_y));
}

std::vector<double> score_snt_batch(const std::vector<Segment>& batch, const EmbeddingStore& source_store,
                                    const EmbeddingStore& hypothesis_store,
                                    const sentembed::SentenceProjection& projection, std::size_t workers) {
  std::vector<double> out(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    out[i] = score_snt(sentembed::pooled_embedding(source_store, batch[i].source, i),
                       sentembed::pooled_embedding(hypothesis_store, batch[i].hypothesis, i), projection);
  });
  return out;
}

std::vector<double> z_normalize(const std::vector<double>& v) {
  if (v.empty()) return {};
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(v.size(), 0.0);
  if (!(sd > 0.0)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  return out;
}

std::vector<double> score_ensemble(const std::vector<double>& wrd, const std::vector<double>& snt,
                                   const ScoreWeights& weights) {
  weights.validate();
  if (wrd.size() != snt.size()) throw ArgumentError("component score lists differ in length");
  if (weights.normalize_components && wrd.size() < 2) {
    throw ArgumentError("component normalization needs a batch of at least 2 segments");
  }
  const auto a = weights.normalize_components ? z_normalize(wrd) : wrd;
  const auto b = weights.normalize_components ? z_normalize(snt) : snt;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = weights.w_wrd * a[i] + weights.w_snt * b[i];
  return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<double>& scores, const std::string& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  if (!header.empty()) out << header << '\n';
  for (std::size_t i = 0; i < scores.size(); ++i) out << i << '\t' << scores[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> scores;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(row);
    if (fields.size() != 2) throw ParseError(where + ": expected index<TAB>score", row);
    if (fields[0] != std::to_string(scores.size())) {
      throw FormatError(where + ": expected index " + std::to_string(scores.size()) + ", got '" + fields[0] + "'");
    }
    const auto v = parse_double(fields[1]);
    if (!v) throw ParseError(where + ": bad score '" + fields[1] + "'", row);
    scores.push_back(*v);
  }
  return scores;
}

}  // namespace uscore::scorer
