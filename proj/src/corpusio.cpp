#include "uscore/corpusio.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "uscore/error.hpp"

namespace uscore {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string format_score(double x) {
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << x;
  return s.str();
}

}  // namespace

std::optional<double> parse_double(const std::string& field) {
  if (field.empty()) return std::nullopt;
  char* end = nullptr;
  const double x = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

Corpus load_corpus(const std::filesystem::path& path, TokenizerKind tokenizer) {
  auto in = open_in(path);
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    ++corpus.lines_read;
    strip_cr(line);
    if (!is_valid_utf8(line)) throw DecodeError(path.string(), corpus.lines_read);
    TokenizedSentence s = make_sentence(line, tokenizer);
    if (s.tokens.empty()) {
      ++corpus.empty_lines_dropped;
      continue;
    }
    corpus.sentences.push_back(std::move(s));
    corpus.line_index.push_back(corpus.lines_read - 1);
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const std::vector<TokenizedSentence>& sentences) {
  auto out = open_out(path);
  for (const auto& s : sentences) out << s.text << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void write_pairs(const std::filesystem::path& path, const std::vector<ScoredPair>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    out << p.source.text << '\t' << p.target.text << '\t' << format_score(p.score);
    if (p.source_index && p.target_index) out << '\t' << *p.source_index << '\t' << *p.target_index;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ScoredPair> load_pairs(const std::filesystem::path& path, TokenizerKind tokenizer) {
  auto in = open_in(path);
  std::vector<ScoredPair> pairs;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    if (!is_valid_utf8(line)) throw DecodeError(path.string(), row);
    const auto f = split_tabs(line);
    if (f.size() != 3 && f.size() != 5) {
      throw FormatError(path.string() + ":" + std::to_string(row) + ": expected 3 or 5 tab-separated fields");
    }
    ScoredPair p;
    p.source = make_sentence(f[0], tokenizer);
    p.target = make_sentence(f[1], tokenizer);
    const auto score = parse_double(f[2]);
    if (!score) throw ParseError(path.string() + ":" + std::to_string(row) + ": non-numeric score '" + f[2] + "'", row);
    p.score = *score;
    if (f.size() == 5) {
      try {
        p.source_index = std::stoull(f[3]);
        p.target_index = std::stoull(f[4]);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(row) + ": bad sentence index", row);
      }
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<EvalRecord> load_eval_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<EvalRecord> records;
  std::string line;
  std::size_t row = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    if (!is_valid_utf8(line)) throw DecodeError(path.string(), row);
    const auto f = split_tabs(line);
    if (f.size() != 3 && f.size() != 4) {
      throw FormatError(path.string() + ":" + std::to_string(row) + ": expected 3 or 4 tab-separated fields, found " +
                        std::to_string(f.size()));
    }
    const auto score = parse_double(f[2]);
    const bool header = first_data_line && !score;
    first_data_line = false;
    if (header) continue;
    if (!score) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + ": non-numeric human score '" + f[2] + "'",
                       row);
    }
    EvalRecord r{f[0], f[1], *score, std::nullopt};
    if (f.size() == 4) r.reference = f[3];
    records.push_back(std::move(r));
  }
  return records;
}

void write_eval_dataset(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  auto out = open_out(path);
  out << "source\thypothesis\thuman_score\n";
  for (const auto& r : records) {
    out << r.source << '\t' << r.hypothesis << '\t' << format_score(r.human_score);
    if (r.reference) out << '\t' << *r.reference;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore
