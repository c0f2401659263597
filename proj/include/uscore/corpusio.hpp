#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uscore/tokenizer.hpp"

namespace uscore {

struct Corpus {
  std::vector<TokenizedSentence> sentences;
  std::vector<std::size_t> line_index;  // 0-based file line of each sentence
  std::size_t lines_read = 0;
  std::size_t empty_lines_dropped = 0;
};

// One sentence per line, order preserved, blank lines dropped. Sentence i of
// the result is the sentence index used by contextual and sentence stores.
Corpus load_corpus(const std::filesystem::path& path, TokenizerKind tokenizer = TokenizerKind::kDefault);
void write_corpus(const std::filesystem::path& path, const std::vector<TokenizedSentence>& sentences);

// A mined or filtered sentence pair. The indices point into the pools the
// pair was mined from and are required for contextual or sentence stores.
struct ScoredPair {
  TokenizedSentence source;
  TokenizedSentence target;
  double score = 0.0;
  std::optional<std::size_t> source_index;
  std::optional<std::size_t> target_index;
};

// TSV: source, target, score[, source_index, target_index]. Scores are written
// with round-trip precision.
void write_pairs(const std::filesystem::path& path, const std::vector<ScoredPair>& pairs);
std::vector<ScoredPair> load_pairs(const std::filesystem::path& path, TokenizerKind tokenizer = TokenizerKind::kDefault);

struct EvalRecord {
  std::string source;
  std::string hypothesis;
  double human_score = 0.0;
  std::optional<std::string> reference;
};

// TSV with columns source, hypothesis, human_score[, reference]. A first row
// whose third field is not numeric is treated as a header.
std::vector<EvalRecord> load_eval_dataset(const std::filesystem::path& path);
void write_eval_dataset(const std::filesystem::path& path, const std::vector<EvalRecord>& records);

// Parses a full-string finite double; nullopt otherwise.
std::optional<double> parse_double(const std::string& field);

std::vector<std::string> split_tabs(const std::string& line);

}  // namespace uscore
