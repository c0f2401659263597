#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uscore/corpusio.hpp"
#include "uscore/mining.hpp"
#include "uscore/remap.hpp"
#include "uscore/sentembed.hpp"

namespace uscore::selflearn {

enum class Track { kRemap, kContrastive };
Track parse_track(std::string_view name);
std::string_view to_string(Track track);

remap::MapKind parse_map_kind(std::string_view name);
std::string_view to_string(remap::MapKind kind);

// Held-out signal reported per iteration; both parts are optional.
struct DevEval {
  std::vector<std::size_t> gold;    // source i translates to target gold[i] (P@1)
  std::vector<EvalRecord> records;  // human judgements (Pearson); static word stores only
};

struct LoopConfig {
  Track track = Track::kRemap;
  std::size_t iterations = 1;
  remap::MapKind remap_kind = remap::MapKind::kOrthogonal;
  remap::ClpOptions clp;
  double min_flow = remap::kDefaultMinFlow;
  mining::MiningConfig mining;
  mining::FilterConfig filter;
  mining::LanguagePredicate source_language;
  mining::LanguagePredicate target_language;
  sentembed::ContrastiveConfig contrastive;
  std::optional<DevEval> dev;
  // When set, every iteration's artifacts and reports.tsv are written here.
  std::optional<std::filesystem::path> run_dir;

  void validate() const;
};

struct IterationReport {
  std::size_t iteration = 0;
  std::size_t mined_pairs = 0;  // pairs surviving selection, filtering and dedup
  double mean_mined_score = 0.0;
  std::size_t training_items = 0;  // word pairs or sentence pairs consumed to reach this state
  std::optional<double> p_at_1;
  std::optional<double> pearson_r;
  bool operator==(const IterationReport&) const = default;
};

struct RemapResult {
  remap::BilingualStores stores;
  std::vector<remap::ProjectionMap> maps;  // in application order
  std::vector<IterationReport> reports;
  std::optional<std::string> aborted;  // reason, when the loop stopped early
  std::vector<std::filesystem::path> artifacts;
};

struct ContrastiveResult {
  sentembed::SentenceProjection projection;
  std::vector<IterationReport> reports;
  std::optional<std::string> aborted;
  std::vector<std::filesystem::path> artifacts;
};

// mine_wmd -> select_top_rate -> filter -> extract_word_pairs -> fit -> remap,
// repeated; each map is fitted on the latest stores and composed on top.
// Report 0 describes the unmapped stores. Input stores are never modified.
RemapResult run_remap_loop(const std::vector<TokenizedSentence>& source_pool,
                           const std::vector<TokenizedSentence>& target_pool, const remap::BilingualStores& stores,
                           const LoopConfig& config);

// mine_margin -> select_top_rate -> filter -> dedup -> train_projection,
// repeated on pooled sentence vectors. Needs config.contrastive.seed.
ContrastiveResult run_contrastive_loop(const std::vector<TokenizedSentence>& source_pool,
                                       const std::vector<TokenizedSentence>& target_pool,
                                       const EmbeddingStore& source_store, const EmbeddingStore& target_store,
                                       const LoopConfig& config);

void write_reports(const std::filesystem::path& path, const std::vector<IterationReport>& reports);

}  // namespace uscore::selflearn
