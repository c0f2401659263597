#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "uscore/corpusio.hpp"
#include "uscore/error.hpp"
#include "uscore/eval.hpp"
#include "uscore/langid.hpp"
#include "uscore/langmodel.hpp"
#include "uscore/manifest.hpp"
#include "uscore/mining.hpp"
#include "uscore/remap.hpp"
#include "uscore/scorer.hpp"
#include "uscore/selflearn.hpp"
#include "uscore/sentembed.hpp"
#include "uscore/store.hpp"
#include "uscore/synthetic.hpp"
#include "uscore/version.hpp"

namespace uscore::cli {

namespace {

namespace fs = std::filesystem;

// Bad invocation that CLI11 cannot see (missing companion input, unknown config key).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options that never influence results and are left out of manifests.
const std::set<std::string> kExecutionOnly = {"help", "workers", "config", "manifest"};

struct Context {
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
  std::string manifest_path;
  std::vector<fs::path> outputs;
  std::optional<fs::path> output_base;  // outputs listed relative to this directory
  std::ostream* out = &std::cout;
  std::ostream* log = &std::cerr;
  int exit_code = kExitOk;  // set by runs that finish with a data problem
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> input_options;  // long names whose values are input files
  std::function<void(Context&)> run;
};

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::string> long_names(const CLI::App& app) {
  std::vector<std::string> names;
  for (const auto* o : app.get_options()) {
    for (const auto& n : o->get_lnames()) names.push_back(n);
    for (const auto& n : o->get_fnames()) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::string suggestion(const CLI::App& app, const std::string& name) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& n : long_names(app)) {
    const std::size_t d = edit_distance(name, n);
    if (d < best_d) {
      best_d = d;
      best = n;
    }
  }
  if (best.empty() || best_d > std::max<std::size_t>(2, name.size() / 3)) return {};
  return "--" + best;
}

std::string flag_name(const std::string& arg) {
  std::string name = arg.substr(2);
  if (const auto eq = name.find('='); eq != std::string::npos) name.resize(eq);
  return name;
}

// key = value lines; '#' starts a comment line; [section] limits the keys that
// follow to the subcommand of that name. Keys are long flag names.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> items;
  std::string line;
  std::string section;
  std::size_t row = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(row) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.starts_with("--")) key = key.substr(2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (!section.empty() && section != command) continue;
    items.emplace_back(key, value);
  }
  return items;
}

// Expands --config: every key not given as a flag becomes --key=value ahead of
// the explicit flags, so flags always win.
std::vector<std::string> merge_config(const CLI::App& sub, std::vector<std::string> args) {
  std::optional<std::string> config;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].starts_with("--config=")) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return args;
  std::set<std::string> given;
  for (const auto& a : rest) {
    if (a.starts_with("--")) given.insert(flag_name(a));
  }
  const auto names = long_names(sub);
  std::vector<std::string> merged;
  for (const auto& [key, value] : read_config(*config, sub.get_name())) {
    if (!std::binary_search(names.begin(), names.end(), key) || kExecutionOnly.contains(key)) {
      const auto s = suggestion(sub, key);
      throw UsageError("unknown config key '" + key + "' in " + *config + (s.empty() ? "" : "; did you mean " + s.substr(2) + "?"));
    }
    if (given.contains(key)) continue;
    merged.push_back("--" + key + "=" + value);
  }
  merged.insert(merged.end(), rest.begin(), rest.end());
  return merged;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

RunManifest make_manifest(const Command& cmd, const std::vector<std::string>& args, const Context& ctx) {
  RunManifest m;
  m.command = cmd.app->get_name();
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.starts_with("--") && kExecutionOnly.contains(flag_name(a))) {
      if (a.find('=') == std::string::npos && i + 1 < args.size() && flag_name(a) != "help") ++i;
      continue;
    }
    m.arguments.push_back(a);
  }
  for (const auto* o : cmd.app->get_options()) {
    const auto& ln = o->get_lnames();
    if (ln.empty() || kExecutionOnly.contains(ln.front())) continue;
    m.config[ln.front()] = o->count() > 0 ? join(o->results(), ",") : o->get_default_str();
  }
  m.seed = ctx.seed;
  for (const auto& name : cmd.input_options) {
    const auto* o = cmd.app->get_option_no_throw("--" + name);
    if (!o) continue;
    for (const auto& v : o->results()) m.add_input(v);
  }
  for (const auto& p : ctx.outputs) m.add_output(p, ctx.output_base.value_or(fs::path{}));
  return m;
}

// ---------------------------------------------------------------- helpers

TokenizerKind tokenizer_of(const std::string& name) { return parse_tokenizer(name); }

std::vector<TokenizedSentence> load_aligned(const std::string& path, TokenizerKind tok, const char* what) {
  Corpus c = load_corpus(path, tok);
  if (c.empty_lines_dropped > 0) {
    throw FormatError(path + ": " + what + " file has empty lines; segment files must stay line-aligned");
  }
  return std::move(c.sentences);
}

remap::BilingualStores apply_maps(remap::BilingualStores stores, const std::vector<std::string>& maps) {
  for (const auto& path : maps) {
    const auto map = remap::load_map(path);
    stores = remap::apply_remap(stores, map, remap::default_side(map.kind));
  }
  return stores;
}

void require_seed(const Context& ctx, const std::string& command) {
  if (!ctx.seed) throw UsageError(command + " is stochastic and requires --seed");
}

std::vector<double> human_scores(const std::vector<EvalRecord>& records) {
  std::vector<double> h;
  for (const auto& r : records) h.push_back(r.human_score);
  return h;
}

void add_mining_options(CLI::App* app, mining::MiningConfig& m) {
  app->add_option("--rate", m.extraction_rate, "Fraction of top-scoring mined pairs kept")->check(CLI::Range(0.0, 1.0));
  app->add_flag("--dedup,!--no-dedup", m.dedup, "Drop pairs whose source or target text repeats a kept pair");
}

void add_filter_options(CLI::App* app, mining::FilterConfig& f) {
  app->add_option("--min-tokens", f.min_tokens, "Drop sentences with fewer tokens");
  app->add_option("--max-tokens", f.max_tokens, "Drop sentences with more tokens");
  app->add_option("--max-overlap", f.max_overlap, "Drop pairs whose character overlap exceeds this")
      ->check(CLI::Range(0.0, 1.0));
}

struct LangIdOptions {
  std::vector<std::string> train;  // label=path
  std::string source_lang;
  std::string target_lang;
};

void add_langid_options(CLI::App* app, LangIdOptions& o) {
  app->add_option("--langid-train", o.train, "Train the trigram language identifier on LABEL=corpus (repeatable)");
  app->add_option("--src-lang", o.source_lang, "Expected source language label");
  app->add_option("--tgt-lang", o.target_lang, "Expected target language label");
}

// Builds trigram predicates when training data is supplied.
std::pair<mining::LanguagePredicate, mining::LanguagePredicate> langid_predicates(const LangIdOptions& o,
                                                                                  TokenizerKind tok,
                                                                                  mining::FilterConfig& filter) {
  if (o.train.empty()) {
    if (!o.source_lang.empty() || !o.target_lang.empty()) {
      throw UsageError("--src-lang/--tgt-lang need --langid-train data (or label files)");
    }
    return {};
  }
  auto id = std::make_shared<mining::TrigramLanguageId>();
  for (const auto& spec : o.train) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--langid-train expects LABEL=path, got '" + spec + "'");
    id->train(spec.substr(0, eq), load_corpus(spec.substr(eq + 1), tok).sentences);
  }
  filter.language_filter = "trigram";
  mining::LanguagePredicate src;
  mining::LanguagePredicate tgt;
  if (!o.source_lang.empty()) src = id->predicate(o.source_lang);
  if (!o.target_lang.empty()) tgt = id->predicate(o.target_lang);
  return {src, tgt};
}

void add_contrastive_options(CLI::App* app, sentembed::ContrastiveConfig& c, std::string& mode) {
  app->add_option("--tau", c.temperature, "Contrastive temperature")->check(CLI::PositiveNumber);
  app->add_option("--batch-size", c.batch_size, "Contrastive batch size (>= 2)");
  app->add_option("--lr", c.learning_rate, "AdamW learning rate");
  app->add_option("--epochs", c.epochs_per_iteration, "Epochs per training call");
  app->add_option("--weight-decay", c.weight_decay, "AdamW decoupled weight decay");
  app->add_option("--denominator", mode, "exclude-positive or include-positive")
      ->check(CLI::IsMember({"exclude-positive", "include-positive"}));
}

// ---------------------------------------------------------------- commands

Command make_score(CLI::App& root) {
  auto* app = root.add_subcommand("score", "Score hypotheses against sources");
  struct Opts {
    std::string preset = "tuned";
    std::string metric = "wrd";
    std::string src, hyp, src_emb, hyp_emb, pseudo_ref, pseudo_emb, lm, lm_scores, projection, src_sent_emb,
        hyp_sent_emb, out, tokenizer = "default", solver = "exact";
    std::vector<std::string> maps;
    std::optional<double> w_xlng, w_lm, w_pseudo, w_wrd, w_snt;
    bool no_normalize = false;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--preset", o->preset, "Weight preset: tuned, plus, plusplus")
      ->check(CLI::IsMember({"tuned", "plus", "plusplus"}));
  app->add_option("--metric", o->metric, "wrd, snt or ensemble")->check(CLI::IsMember({"wrd", "snt", "ensemble"}));
  app->add_option("--src", o->src, "Source segments, one per line")->required();
  app->add_option("--hyp", o->hyp, "Hypotheses, line-aligned with --src")->required();
  app->add_option("--src-emb", o->src_emb, "Source embedding store")->required();
  app->add_option("--hyp-emb", o->hyp_emb, "Target-language embedding store for the hypotheses")->required();
  app->add_option("--pseudo-ref", o->pseudo_ref, "Pseudo references, line-aligned with --src");
  app->add_option("--pseudo-emb", o->pseudo_emb, "Store covering the pseudo references (default: --hyp-emb)");
  app->add_option("--map", o->maps, "Remapping to apply to the word stores, in order (repeatable)");
  app->add_option("--lm", o->lm, "n-gram model for the fluency term");
  app->add_option("--lm-scores", o->lm_scores, "External per-hypothesis fluency scores (index<TAB>score)");
  app->add_option("--projection", o->projection, "Sentence projection (default: identity)");
  app->add_option("--src-sent-emb", o->src_sent_emb, "Sentence-metric source store (default: --src-emb)");
  app->add_option("--hyp-sent-emb", o->hyp_sent_emb, "Sentence-metric hypothesis store (default: --hyp-emb)");
  app->add_option("--w-xlng", o->w_xlng, "Override: cross-lingual transport weight");
  app->add_option("--w-lm", o->w_lm, "Override: fluency weight");
  app->add_option("--w-pseudo", o->w_pseudo, "Override: pseudo-reference weight");
  app->add_option("--w-wrd", o->w_wrd, "Override: ensemble word-metric weight");
  app->add_option("--w-snt", o->w_snt, "Override: ensemble sentence-metric weight");
  app->add_flag("--no-normalize", o->no_normalize, "Do not z-normalize ensemble components");
  app->add_option("--solver", o->solver, "Transport solver: exact or sinkhorn")
      ->check(CLI::IsMember({"exact", "sinkhorn"}));
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  app->add_option("--out", o->out, "Score TSV")->required();

  Command cmd{app, {"src", "hyp", "src-emb", "hyp-emb", "pseudo-ref", "pseudo-emb", "map", "lm", "lm-scores",
                    "projection", "src-sent-emb", "hyp-sent-emb"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto tok = tokenizer_of(o->tokenizer);
    scorer::ScoreWeights w = scorer::ScoreWeights::from_preset(o->preset);
    bool custom = false;
    for (auto [field, value] : {std::pair{&w.w_xlng, o->w_xlng}, std::pair{&w.w_lm, o->w_lm},
                                std::pair{&w.w_pseudo, o->w_pseudo}, std::pair{&w.w_wrd, o->w_wrd},
                                std::pair{&w.w_snt, o->w_snt}}) {
      if (value) {
        *field = *value;
        custom = true;
      }
    }
    if (custom) w.preset = o->preset + "+custom";
    w.normalize_components = !o->no_normalize;
    w.remap_iterations = o->maps.size();
    if (o->metric == "wrd") {
      w.w_wrd = 1.0;
      w.w_snt = 0.0;
    } else if (o->metric == "snt") {
      w.w_wrd = 0.0;
      w.w_snt = 1.0;
    }
    w.validate();

    const auto src = load_aligned(o->src, tok, "source");
    const auto hyp = load_aligned(o->hyp, tok, "hypothesis");
    if (src.size() != hyp.size()) {
      throw FormatError("source has " + std::to_string(src.size()) + " segments, hypotheses " +
                        std::to_string(hyp.size()));
    }
    std::vector<scorer::Segment> batch;
    for (std::size_t i = 0; i < src.size(); ++i) batch.push_back({src[i], hyp[i], std::nullopt});
    const bool need_wrd = o->metric != "snt";
    if (need_wrd && w.w_pseudo != 0.0) {
      if (o->pseudo_ref.empty()) throw UsageError("w_pseudo > 0 requires --pseudo-ref");
      const auto refs = load_aligned(o->pseudo_ref, tok, "pseudo-reference");
      if (refs.size() != batch.size()) throw FormatError("pseudo references do not match the source count");
      for (std::size_t i = 0; i < refs.size(); ++i) batch[i].pseudo_reference = refs[i];
    }

    const EmbeddingStore src_store = load_embedding_store(o->src_emb);
    const EmbeddingStore hyp_store = load_embedding_store(o->hyp_emb);
    std::vector<double> wrd;
    if (need_wrd) {
      std::vector<double> lm;
      if (w.w_lm != 0.0) {
        if (!o->lm.empty() == !o->lm_scores.empty()) throw UsageError("w_lm > 0 requires exactly one of --lm, --lm-scores");
        if (!o->lm.empty()) {
          const auto model = langmodel::load_model(o->lm);
          for (const auto& s : hyp) lm.push_back(langmodel::lm_score(model, s));
        } else {
          for (const auto& [i, v] : langmodel::load_external_scores(o->lm_scores, hyp.size())) lm.push_back(v);
        }
      }
      const auto mapped = apply_maps({src_store, hyp_store}, o->maps);
      std::optional<EmbeddingStore> pseudo_store;
      if (!o->pseudo_emb.empty()) pseudo_store = load_embedding_store(o->pseudo_emb);
      scorer::WordStores stores{&mapped.source, &mapped.target, &hyp_store, pseudo_store ? &*pseudo_store : nullptr};
      transport::WmdOptions wmd;
      wmd.solver = o->solver == "exact" ? transport::Solver::kExact : transport::Solver::kSinkhorn;
      wrd = scorer::score_wrd_batch(batch, stores, lm, w, ctx.workers, wmd);
    }
    std::vector<double> snt;
    if (o->metric != "wrd") {
      const auto projection = o->projection.empty() ? sentembed::SentenceProjection::identity(src_store.dimension())
                                                    : sentembed::load_projection(o->projection);
      const EmbeddingStore s_store = o->src_sent_emb.empty() ? src_store : load_embedding_store(o->src_sent_emb);
      const EmbeddingStore h_store = o->hyp_sent_emb.empty() ? hyp_store : load_embedding_store(o->hyp_sent_emb);
      snt = scorer::score_snt_batch(batch, s_store, h_store, projection, ctx.workers);
    }
    std::vector<double> scores;
    if (o->metric == "wrd") {
      scores = wrd;
    } else if (o->metric == "snt") {
      scores = snt;
    } else {
      scores = scorer::score_ensemble(wrd, snt, w);
    }
    scorer::write_scores(o->out, scores, w.header() + "\tmetric=" + o->metric);
    ctx.outputs.push_back(o->out);
    *ctx.log << "scored " << scores.size() << " segments -> " << o->out << '\n';
  };
  return cmd;
}

Command make_mine(CLI::App& root) {
  auto* app = root.add_subcommand("mine", "Mine pseudo-parallel sentence pairs from two monolingual pools");
  struct Opts {
    std::string strategy = "wmd-prefetch";
    std::optional<std::size_t> k;
    mining::MiningConfig mining;
    std::string src, tgt, src_emb, tgt_emb, projection, out, tokenizer = "default";
    std::vector<std::string> maps;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--strategy", o->strategy, "wmd-prefetch or ratio-margin")
      ->check(CLI::IsMember({"wmd-prefetch", "ratio-margin"}));
  app->add_option("--k", o->k, "Prefetch size (wmd-prefetch, default 20) or margin neighbourhood (ratio-margin, default 5)");
  add_mining_options(app, o->mining);
  app->add_option("--src", o->src, "Source pool, one sentence per line")->required();
  app->add_option("--tgt", o->tgt, "Target pool, one sentence per line")->required();
  app->add_option("--src-emb", o->src_emb, "Source embedding store")->required();
  app->add_option("--tgt-emb", o->tgt_emb, "Target embedding store")->required();
  app->add_option("--map", o->maps, "Remapping to apply first, in order (repeatable)");
  app->add_option("--projection", o->projection, "Sentence projection for ratio-margin mining");
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  app->add_option("--out", o->out, "Mined pairs TSV")->required();
  Command cmd{app, {"src", "tgt", "src-emb", "tgt-emb", "map", "projection"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto tok = tokenizer_of(o->tokenizer);
    auto config = o->mining;
    config.strategy = mining::parse_strategy(o->strategy);
    config.workers = ctx.workers;
    if (o->k) {
      (config.strategy == mining::Strategy::kWmdPrefetch ? config.k_prefetch : config.k_margin) = *o->k;
    }
    config.validate();
    const auto src = load_corpus(o->src, tok).sentences;
    const auto tgt = load_corpus(o->tgt, tok).sentences;
    const auto stores =
        apply_maps({load_embedding_store(o->src_emb), load_embedding_store(o->tgt_emb)}, o->maps);
    std::vector<mining::Match> matches;
    if (config.strategy == mining::Strategy::kWmdPrefetch) {
      matches = mining::mine_wmd(src, tgt, TokenLookup(stores.source), TokenLookup(stores.target), config);
    } else {
      const auto p = o->projection.empty() ? sentembed::SentenceProjection::identity(stores.source.dimension())
                                           : sentembed::load_projection(o->projection);
      matches = mining::mine_margin(p.apply_rows(sentembed::pool_corpus(src, stores.source)),
                                    p.apply_rows(sentembed::pool_corpus(tgt, stores.target)), config);
    }
    auto pairs = mining::select_top_rate(mining::attach_sentences(matches, src, tgt), config.extraction_rate);
    if (config.dedup) pairs = mining::dedup_pairs(pairs);
    write_pairs(o->out, pairs);
    ctx.outputs.push_back(o->out);
    *ctx.log << "mined " << matches.size() << " matches, kept " << pairs.size() << " -> " << o->out << '\n';
  };
  return cmd;
}

Command make_filter(CLI::App& root) {
  auto* app = root.add_subcommand("filter", "Apply length, language and overlap filters");
  struct Opts {
    std::string pairs, corpus, out, src_labels, tokenizer = "default";
    mining::FilterConfig filter;
    LangIdOptions langid;
  };
  auto o = std::make_shared<Opts>();
  auto* p = app->add_option("--pairs", o->pairs, "Pairs TSV to filter");
  auto* c = app->add_option("--corpus", o->corpus, "Corpus (one sentence per line) to filter");
  p->excludes(c);
  add_filter_options(app, o->filter);
  add_langid_options(app, o->langid);
  app->add_option("--labels", o->src_labels, "Per-line language labels of --corpus (used with --src-lang)");
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  app->add_option("--out", o->out, "Filtered output, same format as the input")->required();
  Command cmd{app, {"pairs", "corpus", "labels"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto tok = tokenizer_of(o->tokenizer);
    if (o->pairs.empty() == o->corpus.empty()) throw UsageError("give exactly one of --pairs, --corpus");
    auto filter = o->filter;
    mining::FilterReport report;
    if (!o->corpus.empty()) {
      const Corpus corpus = load_corpus(o->corpus, tok);
      std::vector<TokenizedSentence> sentences = corpus.sentences;
      std::size_t wrong_language = 0;
      mining::LanguagePredicate lang;
      if (!o->src_labels.empty()) {
        if (o->langid.source_lang.empty()) throw UsageError("--labels needs --src-lang");
        const auto labeled = mining::apply_language_labels(sentences, corpus.line_index,
                                                           mining::load_language_labels(o->src_labels),
                                                           o->langid.source_lang);
        wrong_language = labeled.report.wrong_language;
        sentences = labeled.sentences;
        filter.language_filter = "labels";
      } else {
        lang = langid_predicates(o->langid, tok, filter).first;
      }
      const auto kept = mining::filter_corpus(sentences, filter, lang);
      report = kept.report;
      report.input = corpus.sentences.size();
      report.wrong_language += wrong_language;
      write_corpus(o->out, kept.sentences);
    } else {
      if (!o->src_labels.empty()) throw UsageError("--labels applies to --corpus input only");
      const auto [src_lang, tgt_lang] = langid_predicates(o->langid, tok, filter);
      const auto kept = mining::filter_pairs(load_pairs(o->pairs, tok), filter, src_lang, tgt_lang);
      report = kept.report;
      write_pairs(o->out, kept.pairs);
    }
    ctx.outputs.push_back(o->out);
    report.write(*ctx.out);
  };
  return cmd;
}

Command make_remap(CLI::App& root) {
  auto* app = root.add_subcommand("remap", "Fit a cross-lingual remapping from mined pairs");
  struct Opts {
    std::string pairs, src_emb, tgt_emb, kind = "clp", out, src_out, tgt_out, word_pairs_out, tokenizer = "default";
    double min_flow = remap::kDefaultMinFlow;
    remap::ClpOptions clp;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--pairs", o->pairs, "Mined pairs TSV")->required();
  app->add_option("--src-emb", o->src_emb, "Source embedding store")->required();
  app->add_option("--tgt-emb", o->tgt_emb, "Target embedding store")->required();
  app->add_option("--kind", o->kind, "clp (orthogonal map) or umd (bias removal)")->check(CLI::IsMember({"clp", "umd"}));
  app->add_option("--min-flow", o->min_flow, "Minimum transport flow of a kept word alignment");
  app->add_flag("--normalize", o->clp.normalize, "clp: unit-normalize pair vectors before fitting");
  app->add_flag("--center", o->clp.center, "clp: mean-center pair vectors before fitting");
  app->add_option("--out", o->out, "Map file")->required();
  app->add_option("--src-out", o->src_out, "Also write the remapped source store");
  app->add_option("--tgt-out", o->tgt_out, "Also write the remapped target store");
  app->add_option("--word-pairs-out", o->word_pairs_out, "Also write the extracted word pairs");
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  Command cmd{app, {"pairs", "src-emb", "tgt-emb"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto pairs = load_pairs(o->pairs, tokenizer_of(o->tokenizer));
    const remap::BilingualStores stores{load_embedding_store(o->src_emb), load_embedding_store(o->tgt_emb)};
    const auto words =
        remap::extract_word_pairs(pairs, TokenLookup(stores.source), TokenLookup(stores.target), o->min_flow);
    if (words.size() == 0) throw DegenerateInputError("no word pairs could be extracted from " + o->pairs);
    const auto map = selflearn::parse_map_kind(o->kind) == remap::MapKind::kOrthogonal ? remap::fit_clp(words, o->clp)
                                                                                      : remap::fit_umd(words);
    if (map.degenerate) *ctx.log << "warning: rank-deficient cross-covariance; the orthogonal map is not unique\n";
    if (map.underdetermined) *ctx.log << "warning: fewer word pairs than dimensions\n";
    remap::save_map(map, o->out);
    ctx.outputs.push_back(o->out);
    const auto mapped = remap::apply_remap(stores, map, remap::default_side(map.kind));
    if (!o->src_out.empty()) {
      save_binary(mapped.source, o->src_out);
      ctx.outputs.push_back(o->src_out);
    }
    if (!o->tgt_out.empty()) {
      save_binary(mapped.target, o->tgt_out);
      ctx.outputs.push_back(o->tgt_out);
    }
    if (!o->word_pairs_out.empty()) {
      remap::write_word_pairs(o->word_pairs_out, words);
      ctx.outputs.push_back(o->word_pairs_out);
    }
    *ctx.log << "fitted " << o->kind << " on " << words.size() << " word pairs -> " << o->out << '\n';
  };
  return cmd;
}

Command make_train_sent(CLI::App& root) {
  auto* app = root.add_subcommand("train-sent", "Train the contrastive sentence projection on mined pairs");
  struct Opts {
    std::string pairs, src_emb, tgt_emb, init, out, loss_log, mode = "exclude-positive", tokenizer = "default";
    sentembed::ContrastiveConfig config;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--pairs", o->pairs, "Mined pairs TSV (deduplicate when mining)")->required();
  app->add_option("--src-emb", o->src_emb, "Source store (word, contextual or sentence)")->required();
  app->add_option("--tgt-emb", o->tgt_emb, "Target store (word, contextual or sentence)")->required();
  app->add_option("--init", o->init, "Starting projection (default: identity)");
  add_contrastive_options(app, o->config, o->mode);
  app->add_option("--out", o->out, "Projection file")->required();
  app->add_option("--loss-log", o->loss_log, "Per-step loss TSV");
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  Command cmd{app, {"pairs", "src-emb", "tgt-emb", "init"}, {}};
  cmd.run = [o](Context& ctx) {
    require_seed(ctx, "train-sent");
    auto config = o->config;
    config.seed = ctx.seed;
    config.denominator_mode = sentembed::parse_denominator_mode(o->mode);
    const auto src = load_embedding_store(o->src_emb);
    const auto tgt = load_embedding_store(o->tgt_emb);
    const auto init = o->init.empty() ? sentembed::SentenceProjection::identity(src.dimension())
                                      : sentembed::load_projection(o->init);
    const auto trained =
        sentembed::train_projection(load_pairs(o->pairs, tokenizer_of(o->tokenizer)), src, tgt, init, config);
    sentembed::save_projection(trained, o->out);
    ctx.outputs.push_back(o->out);
    if (!o->loss_log.empty()) {
      sentembed::write_loss_log(trained, o->loss_log);
      ctx.outputs.push_back(o->loss_log);
    }
    *ctx.log << "trained " << trained.loss_log.size() << " steps -> " << o->out << '\n';
  };
  return cmd;
}

Command make_train_lm(CLI::App& root) {
  auto* app = root.add_subcommand("train-lm", "Train the n-gram fluency model");
  struct Opts {
    std::string corpus, vocab, out, smoothing = "witten-bell", hyp, scores_out, tokenizer = "default";
    int order = 3;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--corpus", o->corpus, "Target-language training text")->required();
  app->add_option("--order", o->order, "n-gram order")->check(CLI::Range(1, 16));
  app->add_option("--smoothing", o->smoothing, "witten-bell, add-one or add-k:<k>");
  app->add_option("--vocab", o->vocab, "Fixed vocabulary, one token per line (default: training tokens)");
  app->add_option("--out", o->out, "Model file")->required();
  app->add_option("--hyp", o->hyp, "Also score these sentences");
  app->add_option("--scores-out", o->scores_out, "Where to write the --hyp scores (index<TAB>score)");
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  Command cmd{app, {"corpus", "vocab", "hyp"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto tok = tokenizer_of(o->tokenizer);
    if (o->hyp.empty() != o->scores_out.empty()) throw UsageError("--hyp and --scores-out go together");
    std::optional<std::set<std::string>> vocab;
    if (!o->vocab.empty()) {
      vocab.emplace();
      for (const auto& s : load_corpus(o->vocab, TokenizerKind::kWhitespace).sentences) {
        vocab->insert(s.tokens.begin(), s.tokens.end());
      }
    }
    const auto model =
        langmodel::train_ngram(load_corpus(o->corpus, tok).sentences, o->order, langmodel::parse_smoothing(o->smoothing), vocab);
    langmodel::save_model(model, o->out);
    ctx.outputs.push_back(o->out);
    if (!o->hyp.empty()) {
      std::vector<double> scores;
      for (const auto& s : load_aligned(o->hyp, tok, "hypothesis")) scores.push_back(langmodel::lm_score(model, s));
      langmodel::write_scores(o->scores_out, scores);
      ctx.outputs.push_back(o->scores_out);
    }
    *ctx.log << "trained order-" << o->order << " model over " << model.vocabulary().size() << " words -> " << o->out
             << '\n';
  };
  return cmd;
}

Command make_selflearn(CLI::App& root) {
  auto* app = root.add_subcommand("selflearn", "Iterate mining and remapping or contrastive training");
  struct Opts {
    std::string track = "remap", kind = "clp", src, tgt, src_emb, tgt_emb, gold, dev, run_dir, mode = "exclude-positive",
                tokenizer = "default";
    std::optional<std::size_t> k_prefetch, k_margin;
    selflearn::LoopConfig loop;
    LangIdOptions langid;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--track", o->track, "remap or contrastive")->check(CLI::IsMember({"remap", "contrastive"}));
  app->add_option("--iterations", o->loop.iterations, "Number of mine-and-update iterations");
  app->add_option("--kind", o->kind, "remap track: clp or umd")->check(CLI::IsMember({"clp", "umd"}));
  app->add_option("--min-flow", o->loop.min_flow, "remap track: minimum flow of a kept word alignment");
  app->add_option("--k-prefetch", o->loop.mining.k_prefetch, "remap track: WCD prefetch size");
  app->add_option("--k-margin", o->loop.mining.k_margin, "contrastive track: margin neighbourhood size");
  add_mining_options(app, o->loop.mining);
  add_filter_options(app, o->loop.filter);
  add_langid_options(app, o->langid);
  add_contrastive_options(app, o->loop.contrastive, o->mode);
  app->add_option("--src", o->src, "Source pool")->required();
  app->add_option("--tgt", o->tgt, "Target pool")->required();
  app->add_option("--src-emb", o->src_emb, "Source store")->required();
  app->add_option("--tgt-emb", o->tgt_emb, "Target store")->required();
  app->add_option("--gold", o->gold, "Gold alignment of the pools for P@1 (source<TAB>target)");
  app->add_option("--dev", o->dev, "Dev records (source, hypothesis, human score) for Pearson");
  app->add_option("--run-dir", o->run_dir, "Directory for iteration artifacts, reports and manifest")->required();
  app->add_option("--tokenizer", o->tokenizer, "default or whitespace")->check(CLI::IsMember({"default", "whitespace"}));
  Command cmd{app, {"src", "tgt", "src-emb", "tgt-emb", "gold", "dev"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto tok = tokenizer_of(o->tokenizer);
    auto loop = o->loop;
    loop.track = selflearn::parse_track(o->track);
    loop.remap_kind = selflearn::parse_map_kind(o->kind);
    loop.mining.workers = ctx.workers;
    loop.mining.strategy =
        loop.track == selflearn::Track::kRemap ? mining::Strategy::kWmdPrefetch : mining::Strategy::kRatioMargin;
    loop.contrastive.denominator_mode = sentembed::parse_denominator_mode(o->mode);
    if (loop.track == selflearn::Track::kContrastive) {
      require_seed(ctx, "selflearn --track contrastive");
      loop.contrastive.seed = ctx.seed;
    }
    std::tie(loop.source_language, loop.target_language) = langid_predicates(o->langid, tok, loop.filter);
    if (!o->gold.empty() || !o->dev.empty()) {
      loop.dev.emplace();
      if (!o->gold.empty()) loop.dev->gold = synthetic::load_gold(o->gold);
      if (!o->dev.empty()) loop.dev->records = load_eval_dataset(o->dev);
    }
    const fs::path dir = o->run_dir;
    loop.run_dir = dir;
    ctx.output_base = dir;
    if (ctx.manifest_path.empty()) ctx.manifest_path = (dir / "manifest.json").string();
    const auto src = load_corpus(o->src, tok).sentences;
    const auto tgt = load_corpus(o->tgt, tok).sentences;
    const auto src_store = load_embedding_store(o->src_emb);
    const auto tgt_store = load_embedding_store(o->tgt_emb);
    std::optional<std::string> aborted;
    if (loop.track == selflearn::Track::kRemap) {
      const auto r = selflearn::run_remap_loop(src, tgt, {src_store, tgt_store}, loop);
      ctx.outputs.insert(ctx.outputs.end(), r.artifacts.begin(), r.artifacts.end());
      aborted = r.aborted;
    } else {
      const auto r = selflearn::run_contrastive_loop(src, tgt, src_store, tgt_store, loop);
      ctx.outputs.insert(ctx.outputs.end(), r.artifacts.begin(), r.artifacts.end());
      aborted = r.aborted;
    }
    std::ifstream reports(dir / "reports.tsv");
    *ctx.out << reports.rdbuf();
    if (aborted) {
      *ctx.log << "loop stopped early: " << *aborted << '\n';
      ctx.exit_code = kExitData;
    }
  };
  return cmd;
}

Command make_eval(CLI::App& root) {
  auto* app = root.add_subcommand("eval", "Correlate metric scores with human judgements");
  struct Opts {
    std::string scores, dataset, metric_name, lp = "unknown", out;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--scores", o->scores, "Score TSV from `score`")->required();
  app->add_option("--dataset", o->dataset, "Evaluation TSV (source, hypothesis, human score[, reference])")->required();
  app->add_option("--metric-name", o->metric_name, "Metric name in the report (default: score file stem)");
  app->add_option("--lp", o->lp, "Language pair label in the report");
  app->add_option("--out", o->out, "Report TSV (default: stdout)");
  Command cmd{app, {"scores", "dataset"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto scores = scorer::load_scores(o->scores);
    const auto records = load_eval_dataset(o->dataset);
    if (scores.size() != records.size()) {
      throw FormatError(std::to_string(scores.size()) + " scores for " + std::to_string(records.size()) + " records");
    }
    const std::string name = o->metric_name.empty() ? fs::path(o->scores).stem().string() : o->metric_name;
    const std::vector<eval::ReportRow> rows = {{name, o->lp, eval::pearson(scores, human_scores(records))}};
    if (o->out.empty()) {
      eval::write_report(*ctx.out, rows);
    } else {
      eval::write_report(o->out, rows);
      ctx.outputs.push_back(o->out);
    }
  };
  return cmd;
}

Command make_compare(CLI::App& root) {
  auto* app = root.add_subcommand("compare", "Test whether two metrics correlate differently with humans");
  struct Opts {
    std::string scores_a, scores_b, dataset, method = "bootstrap", out;
    std::size_t resamples = 10000;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--scores-a", o->scores_a, "First metric's score TSV")->required();
  app->add_option("--scores-b", o->scores_b, "Second metric's score TSV")->required();
  app->add_option("--dataset", o->dataset, "Evaluation TSV with human scores")->required();
  app->add_option("--method", o->method, "bootstrap (paired) or t-test (compatibility)")
      ->check(CLI::IsMember({"bootstrap", "t-test"}));
  app->add_option("--resamples", o->resamples, "Bootstrap resamples");
  app->add_option("--out", o->out, "Result TSV (default: stdout)");
  Command cmd{app, {"scores-a", "scores-b", "dataset"}, {}};
  cmd.run = [o](Context& ctx) {
    eval::CompareOptions opts;
    opts.method = eval::parse_compare_method(o->method);
    if (opts.method == eval::CompareMethod::kBootstrap) require_seed(ctx, "compare --method bootstrap");
    opts.seed = ctx.seed.value_or(0);
    opts.resamples = o->resamples;
    opts.workers = ctx.workers;
    const auto records = load_eval_dataset(o->dataset);
    const auto r = eval::compare_metrics(scorer::load_scores(o->scores_a), scorer::load_scores(o->scores_b),
                                         human_scores(records), opts);
    std::ostringstream s;
    s.precision(std::numeric_limits<double>::max_digits10);
    s << "method\tr_a\tr_b\tp_value\n" << o->method << '\t' << r.r_a << '\t' << r.r_b << '\t' << r.p_value << '\n';
    if (o->out.empty()) {
      *ctx.out << s.str();
    } else {
      std::ofstream f(o->out, std::ios::binary | std::ios::trunc);
      f << s.str();
      if (!f) throw IoError("write failed: " + o->out);
      f.close();
      ctx.outputs.push_back(o->out);
    }
  };
  return cmd;
}

Command make_synth(CLI::App& root) {
  auto* app = root.add_subcommand("synth", "Generate planted bilingual pools with known translations");
  struct Opts {
    synthetic::SynthConfig config;
    std::string out_dir;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--out-dir", o->out_dir, "Output directory")->required();
  app->add_option("--dimension", o->config.dimension, "Embedding dimension");
  app->add_option("--vocabulary", o->config.vocabulary, "Words per language");
  app->add_option("--sentences", o->config.sentences, "Sentences per pool");
  app->add_option("--noise", o->config.noise, "Target word noise standard deviation");
  app->add_option("--planes", o->config.planes, "Rotated planes");
  app->add_option("--mismatch-scale", o->config.mismatch_scale, "Spread of the rotated subspace");
  app->add_option("--max-angle", o->config.max_angle, "Largest rotation angle (radians)");
  app->add_option("--min-angle", o->config.min_angle, "Smallest rotation angle (radians)");
  app->add_option("--dev-records", o->config.dev_records, "Synthetic human-judgement records");
  Command cmd{app, {}, {}};
  cmd.run = [o](Context& ctx) {
    require_seed(ctx, "synth");
    auto config = o->config;
    config.seed = *ctx.seed;
    const auto paths = synthetic::write(synthetic::generate(config), o->out_dir);
    ctx.output_base = fs::path(o->out_dir);
    if (ctx.manifest_path.empty()) ctx.manifest_path = (fs::path(o->out_dir) / "manifest.json").string();
    ctx.outputs.insert(ctx.outputs.end(), paths.begin(), paths.end());
    for (const auto& p : paths) *ctx.out << p.string() << '\n';
  };
  return cmd;
}

Command make_inspect(CLI::App& root) {
  auto* app = root.add_subcommand("inspect", "Print a store header and verify it against an exporter sidecar");
  struct Opts {
    std::string store, sidecar;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--store", o->store, "Embedding store (binary or text)")->required();
  app->add_option("--sidecar", o->sidecar, "Exporter sidecar JSON to check against");
  Command cmd{app, {"store", "sidecar"}, {}};
  cmd.run = [o](Context& ctx) {
    const auto store = load_embedding_store(o->store);
    *ctx.out << "kind\t" << to_string(store.kind()) << "\ndimension\t" << store.dimension() << "\ncount\t"
             << store.size() << "\nfloat_checksum_sha256\t" << float_checksum(store) << '\n';
    if (!o->sidecar.empty()) {
      const auto check = check_sidecar(store, o->sidecar);
      for (const auto& p : check.problems) *ctx.log << "sidecar mismatch: " << p << '\n';
      if (!check.ok) throw FormatError(o->store + " does not match " + o->sidecar);
      *ctx.out << "sidecar\tok\n";
    }
  };
  return cmd;
}

int report_unknown(const CLI::App& sub, const std::vector<std::string>& extras, std::ostream& err) {
  for (const auto& e : extras) {
    if (e.starts_with("--")) {
      const auto s = suggestion(sub, flag_name(e));
      err << "error: unknown flag " << e << " for '" << sub.get_name() << "'";
      if (!s.empty()) err << "; did you mean " << s << "?";
      err << '\n';
    } else {
      err << "error: unexpected argument '" << e << "' for '" << sub.get_name() << "'\n";
    }
  }
  err << "run `uscore " << sub.get_name() << " --help` for the flag list\n";
  return kExitUsage;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App root{"Unsupervised MT-evaluation metric toolkit", "uscore"};
  root.option_defaults()->always_capture_default();
  root.set_version_flag("--version", kVersion);
  root.require_subcommand(1, 1);
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
  std::string manifest;
  std::vector<Command> commands;
  for (auto* make : {make_score, make_mine, make_filter, make_remap, make_train_sent, make_train_lm, make_selflearn,
                     make_eval, make_compare, make_synth, make_inspect}) {
    Command c = make(root);
    c.app->add_option("--workers", workers, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    c.app->add_option("--seed", seed, "Random seed (required by stochastic commands)");
    c.app->add_option("--manifest", manifest, "Manifest path (default: next to the main output)");
    c.app->add_option("--config", "Config file of key = value lines; flags win over it");
    commands.push_back(std::move(c));
  }

  // Locate the subcommand and expand its config file before parsing.
  std::vector<std::string> argv = args;
  const Command* selected = nullptr;
  try {
    if (!argv.empty()) {
      for (const auto& c : commands) {
        if (c.app->get_name() == argv.front()) selected = &c;
      }
      if (selected) {
        std::vector<std::string> rest(argv.begin() + 1, argv.end());
        // Unknown flags are reported before missing required ones.
        const auto names = long_names(*selected->app);
        std::vector<std::string> unknown;
        for (const auto& a : rest) {
          if (a == "--") break;
          if (a.starts_with("--") && !std::binary_search(names.begin(), names.end(), flag_name(a))) unknown.push_back(a);
        }
        if (!unknown.empty()) return report_unknown(*selected->app, unknown, std::cerr);
        rest = merge_config(*selected->app, rest);
        argv.resize(1);
        argv.insert(argv.end(), rest.begin(), rest.end());
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    root.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return root.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return root.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForVersion& e) {
    root.exit(e);
    return kExitOk;
  } catch (const CLI::ExtrasError& e) {
    if (selected) {
      std::vector<std::string> extras;
      for (const auto& x : selected->app->remaining()) extras.push_back(x);
      if (extras.empty()) extras = root.remaining();
      return report_unknown(*selected->app, extras, std::cerr);
    }
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (selected) std::cerr << "run `uscore " << selected->app->get_name() << " --help` for the flag list\n";
    return kExitUsage;
  }

  const Command* cmd = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) cmd = &c;
  }
  if (!cmd) return kExitUsage;

  Context ctx;
  ctx.workers = workers;
  ctx.seed = seed;
  ctx.manifest_path = manifest;
  try {
    cmd->run(ctx);
    if (ctx.manifest_path.empty() && !ctx.outputs.empty()) ctx.manifest_path = ctx.outputs.front().string() + ".manifest.json";
    if (!ctx.manifest_path.empty()) {
      make_manifest(*cmd, std::vector<std::string>(argv.begin(), argv.end()), ctx).write(ctx.manifest_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return ctx.exit_code;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace uscore::cli
