#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uscore/corpusio.hpp"
#include "uscore/store.hpp"
#include "uscore/types.hpp"

// Planted bilingual data: target words are a rotation of source words plus
// noise, and every target sentence is a shuffled word-by-word translation of
// a source sentence. Used for self-learning checks where the right answer is
// known.
namespace uscore::synthetic {

struct SynthConfig {
  std::size_t dimension = 32;
  std::size_t vocabulary = 400;
  std::size_t sentences = 1000;
  std::size_t min_length = 4;
  std::size_t max_length = 12;
  double noise = 0.02;           // std of the target-side word noise
  std::size_t planes = 5;        // rotated planes
  double mismatch_scale = 3.0;   // std of the rotated subspace (others 1)
  double max_angle = 1.5707963267948966;  // rotation angles spread over [min, max]
  double min_angle = 1.0471975511965976;
  std::size_t dev_records = 200;  // synthetic human-judgement records
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  std::vector<TokenizedSentence> source;
  std::vector<TokenizedSentence> target;  // pool order shuffled
  std::vector<std::size_t> gold;          // source i translates to target gold[i]
  EmbeddingStore source_store;
  EmbeddingStore target_store;
  Matrix rotation;                        // target word ≈ rotation · source word
  std::vector<EvalRecord> dev;            // corrupted translations scored by 1 - corruption rate
};

// Source words use letters a-m, target words n-z, so no pair is dropped by the
// character-overlap filter.
SynthData generate(const SynthConfig& config);

// Writes source.txt, target.txt, source.useb, target.useb, gold.tsv, dev.tsv
// into `dir`; returns the written paths.
std::vector<std::filesystem::path> write(const SynthData& data, const std::filesystem::path& dir);

// "source_index<TAB>target_index" lines.
void write_gold(const std::filesystem::path& path, const std::vector<std::size_t>& gold);
std::vector<std::size_t> load_gold(const std::filesystem::path& path);

}  // namespace uscore::synthetic
