#include "uscore/selflearn.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

#include "uscore/error.hpp"
#include "uscore/eval.hpp"
#include "uscore/parallel.hpp"
#include "uscore/random.hpp"
#include "uscore/transport.hpp"

namespace uscore::selflearn {

namespace {

std::string tag(std::size_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter%02zu", iteration);
  return buf;
}

struct Selection {
  std::vector<ScoredPair> pairs;
  double mean_score = 0.0;
};

Selection select(const std::vector<mining::Match>& matches, const std::vector<TokenizedSentence>& source_pool,
                 const std::vector<TokenizedSentence>& target_pool, const LoopConfig& config, bool dedup) {
  auto pairs = mining::select_top_rate(mining::attach_sentences(matches, source_pool, target_pool),
                                       config.mining.extraction_rate);
  pairs = mining::filter_pairs(pairs, config.filter, config.source_language, config.target_language).pairs;
  if (dedup) pairs = mining::dedup_pairs(pairs);
  Selection s;
  for (const auto& p : pairs) s.mean_score += p.score;
  if (!pairs.empty()) s.mean_score /= static_cast<double>(pairs.size());
  s.pairs = std::move(pairs);
  return s;
}

std::optional<double> p_at_1(const std::vector<std::size_t>& top1, const std::optional<DevEval>& dev) {
  if (!dev || dev->gold.empty()) return std::nullopt;
  std::vector<std::vector<std::size_t>> retrieved;
  std::map<std::size_t, std::size_t> gold;
  for (std::size_t i = 0; i < top1.size(); ++i) {
    retrieved.push_back({top1[i]});
    gold[i] = dev->gold.at(i);
  }
  return eval::precision_at_n(retrieved, gold, 1);
}

std::optional<double> pearson_or_none(const std::vector<double>& metric, const std::vector<EvalRecord>& records) {
  std::vector<double> human;
  for (const auto& r : records) human.push_back(r.human_score);
  try {
    return eval::pearson(metric, human).r;
  } catch (const UndefinedCorrelationError&) {
    return std::nullopt;
  }
}

// Tokenized dev records, parsed once.
struct DevSentences {
  std::vector<TokenizedSentence> source;
  std::vector<TokenizedSentence> hypothesis;
};

DevSentences tokenize_dev(const std::optional<DevEval>& dev) {
  DevSentences out;
  if (!dev) return out;
  for (const auto& r : dev->records) {
    out.source.push_back(make_sentence(r.source));
    out.hypothesis.push_back(make_sentence(r.hypothesis));
  }
  return out;
}

void check_pools(const std::vector<TokenizedSentence>& source_pool, const std::vector<TokenizedSentence>& target_pool,
                 const LoopConfig& config) {
  config.validate();
  if (source_pool.empty() || target_pool.empty()) throw ArgumentError("self-learning needs non-empty pools");
  if (config.dev && !config.dev->gold.empty()) {
    if (config.dev->gold.size() != source_pool.size()) {
      throw ArgumentError("gold alignment has " + std::to_string(config.dev->gold.size()) + " entries for " +
                          std::to_string(source_pool.size()) + " source sentences");
    }
    for (const auto g : config.dev->gold) {
      if (g >= target_pool.size()) throw ArgumentError("gold target index out of range");
    }
  }
  if (config.run_dir) std::filesystem::create_directories(*config.run_dir);
}

}  // namespace

Track parse_track(std::string_view name) {
  if (name == "remap") return Track::kRemap;
  if (name == "contrastive") return Track::kContrastive;
  throw ArgumentError("unknown track '" + std::string(name) + "' (remap, contrastive)");
}

std::string_view to_string(Track track) { return track == Track::kRemap ? "remap" : "contrastive"; }

remap::MapKind parse_map_kind(std::string_view name) {
  if (name == "clp") return remap::MapKind::kOrthogonal;
  if (name == "umd") return remap::MapKind::kBiasRemoval;
  throw ArgumentError("unknown remap kind '" + std::string(name) + "' (clp, umd)");
}

std::string_view to_string(remap::MapKind kind) { return kind == remap::MapKind::kOrthogonal ? "clp" : "umd"; }

void LoopConfig::validate() const {
  mining.validate();
  filter.validate();
  if (track == Track::kContrastive) contrastive.validate();
  if (!(min_flow >= 0.0)) throw ArgumentError("min_flow must be non-negative");
}

RemapResult run_remap_loop(const std::vector<TokenizedSentence>& source_pool,
                           const std::vector<TokenizedSentence>& target_pool, const remap::BilingualStores& stores,
                           const LoopConfig& config) {
  check_pools(source_pool, target_pool, config);
  const DevSentences dev = tokenize_dev(config.dev);
  RemapResult result{stores, {}, {}, std::nullopt, {}};

  // Mines with the current stores and fills in everything measurable about them.
  const auto measure = [&](std::size_t iteration, std::size_t training_items, Selection& selection) {
    const TokenLookup src(result.stores.source);
    const TokenLookup tgt(result.stores.target);
    const auto matches = mining::mine_wmd(mining::embed_pool(source_pool, src), mining::embed_pool(target_pool, tgt),
                                          config.mining);
    std::vector<std::size_t> top1(source_pool.size());
    for (const auto& m : matches) top1[m.source] = m.target;
    selection = select(matches, source_pool, target_pool, config, config.mining.dedup);

    IterationReport r;
    r.iteration = iteration;
    r.mined_pairs = selection.pairs.size();
    r.mean_mined_score = selection.mean_score;
    r.training_items = training_items;
    r.p_at_1 = p_at_1(top1, config.dev);
    if (config.dev && !config.dev->records.empty()) {
      std::vector<double> metric(dev.source.size());
      for (std::size_t i = 0; i < metric.size(); ++i) {
        metric[i] = -transport::wmd(src.embed(dev.source[i], i), tgt.embed(dev.hypothesis[i], i)).distance;
      }
      r.pearson_r = pearson_or_none(metric, config.dev->records);
    }
    result.reports.push_back(r);
  };

  Selection selection;
  measure(0, 0, selection);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (selection.pairs.empty()) {
      result.aborted = "iteration " + std::to_string(it) + ": no mined pairs survived selection";
      break;
    }
    const auto words = remap::extract_word_pairs(selection.pairs, TokenLookup(result.stores.source),
                                                 TokenLookup(result.stores.target), config.min_flow);
    if (words.size() == 0) {
      result.aborted = "iteration " + std::to_string(it) + ": no word pairs extracted";
      break;
    }
    remap::ProjectionMap map;
    try {
      map = config.remap_kind == remap::MapKind::kOrthogonal ? remap::fit_clp(words, config.clp) : remap::fit_umd(words);
    } catch (const DegenerateInputError& e) {
      result.aborted = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    result.stores = remap::apply_remap(result.stores, map, remap::default_side(map.kind));
    result.maps.push_back(map);
    if (config.run_dir) {
      const auto& dir = *config.run_dir;
      const std::string t = tag(it);
      const std::vector<std::filesystem::path> files = {dir / ("pairs_" + t + ".tsv"), dir / ("word_pairs_" + t + ".tsv"),
                                                        dir / ("map_" + t + ".useb"), dir / ("source_" + t + ".useb"),
                                                        dir / ("target_" + t + ".useb")};
      write_pairs(files[0], selection.pairs);
      remap::write_word_pairs(files[1], words);
      remap::save_map(map, files[2]);
      save_binary(result.stores.source, files[3]);
      save_binary(result.stores.target, files[4]);
      result.artifacts.insert(result.artifacts.end(), files.begin(), files.end());
    }
    measure(it, words.size(), selection);
  }
  if (config.run_dir) {
    const auto path = *config.run_dir / "reports.tsv";
    write_reports(path, result.reports);
    result.artifacts.push_back(path);
  }
  return result;
}

ContrastiveResult run_contrastive_loop(const std::vector<TokenizedSentence>& source_pool,
                                       const std::vector<TokenizedSentence>& target_pool,
                                       const EmbeddingStore& source_store, const EmbeddingStore& target_store,
                                       const LoopConfig& config) {
  check_pools(source_pool, target_pool, config);
  if (!config.contrastive.seed) throw ArgumentError("the contrastive loop requires a seed");
  if (source_store.dimension() != target_store.dimension()) throw ArgumentError("store dimensions differ");
  const DevSentences dev = tokenize_dev(config.dev);
  const Matrix xs = sentembed::pool_corpus(source_pool, source_store);
  const Matrix ys = sentembed::pool_corpus(target_pool, target_store);
  Matrix dev_x;
  Matrix dev_y;
  if (config.dev && !config.dev->records.empty()) {
    if (source_store.kind() != StoreKind::kStaticWord || target_store.kind() != StoreKind::kStaticWord) {
      throw ArgumentError("dev records can only be embedded with static word stores");
    }
    dev_x = sentembed::pool_corpus(dev.source, source_store);
    dev_y = sentembed::pool_corpus(dev.hypothesis, target_store);
  }

  ContrastiveResult result{sentembed::SentenceProjection::identity(source_store.dimension()), {}, std::nullopt, {}};
  const auto measure = [&](std::size_t iteration, std::size_t training_items, Selection& selection) {
    const Matrix a = result.projection.apply_rows(xs);
    const Matrix b = result.projection.apply_rows(ys);
    const auto matches = mining::mine_margin(a, b, config.mining);
    selection = select(matches, source_pool, target_pool, config, true);

    IterationReport r;
    r.iteration = iteration;
    r.mined_pairs = selection.pairs.size();
    r.mean_mined_score = selection.mean_score;
    r.training_items = training_items;
    if (config.dev && !config.dev->gold.empty()) {
      // Retrieval by cosine, ties to the lower target index.
      const Matrix an = a.rowwise().normalized();
      const Matrix bn = b.rowwise().normalized();
      std::vector<std::size_t> top1(source_pool.size());
      parallel_for(top1.size(), config.mining.workers, [&](std::size_t i) {
        const Vector sims = bn * an.row(static_cast<Eigen::Index>(i)).transpose();
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < sims.size(); ++j) {
          if (sims[j] > sims[best]) best = j;
        }
        top1[i] = static_cast<std::size_t>(best);
      });
      r.p_at_1 = p_at_1(top1, config.dev);
    }
    if (dev_x.rows() > 0) {
      std::vector<double> metric(static_cast<std::size_t>(dev_x.rows()));
      for (std::size_t i = 0; i < metric.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        metric[i] = sentembed::cosine_score(result.projection.apply(dev_x.row(k).transpose()),
                                            result.projection.apply(dev_y.row(k).transpose()));
      }
      r.pearson_r = pearson_or_none(metric, config.dev->records);
    }
    result.reports.push_back(r);
  };

  Selection selection;
  measure(0, 0, selection);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (selection.pairs.size() < config.contrastive.batch_size) {
      result.aborted = "iteration " + std::to_string(it) + ": " + std::to_string(selection.pairs.size()) +
                       " mined pairs, fewer than one batch of " + std::to_string(config.contrastive.batch_size);
      break;
    }
    std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
    for (const auto& p : selection.pairs) index_pairs.emplace_back(*p.source_index, *p.target_index);
    sentembed::ContrastiveConfig cc = config.contrastive;
    cc.seed = random::derive_seed(*config.contrastive.seed, it);
    result.projection = sentembed::train_projection(index_pairs, xs, ys, result.projection, cc);
    if (config.run_dir) {
      const auto& dir = *config.run_dir;
      const std::string t = tag(it);
      const std::vector<std::filesystem::path> files = {dir / ("pairs_" + t + ".tsv"),
                                                        dir / ("projection_" + t + ".useb"),
                                                        dir / ("loss_" + t + ".tsv")};
      write_pairs(files[0], selection.pairs);
      sentembed::save_projection(result.projection, files[1]);
      sentembed::write_loss_log(result.projection, files[2]);
      result.artifacts.insert(result.artifacts.end(), files.begin(), files.end());
    }
    result.projection.loss_log.clear();
    measure(it, index_pairs.size(), selection);
  }
  if (config.run_dir) {
    const auto path = *config.run_dir / "reports.tsv";
    write_reports(path, result.reports);
    result.artifacts.push_back(path);
  }
  return result;
}

void write_reports(const std::filesystem::path& path, const std::vector<IterationReport>& reports) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  const auto opt = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "NA";
    }
  };
  out << "iteration\tmined_pairs\tmean_mined_score\ttraining_items\tp_at_1\tpearson_r\n";
  for (const auto& r : reports) {
    out << r.iteration << '\t' << r.mined_pairs << '\t' << r.mean_mined_score << '\t' << r.training_items << '\t';
    opt(r.p_at_1);
    out << '\t';
    opt(r.pearson_r);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore::selflearn
