#include <fstream>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "uscore/corpusio.hpp"

using namespace uscore;
using uscore::testing::fixture;
using uscore::testing::scratch_dir;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Run r;
  r.code = cli::dispatch(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Small planted pools written by the synth command.
fs::path synth_dir(const std::string& name, std::size_t sentences = 200) {
  const auto dir = scratch_dir(name);
  const auto r = run({"synth", "--seed", "7", "--out-dir", dir.string(), "--sentences", std::to_string(sentences),
                      "--dev-records", "40"});
  REQUIRE(r.code == cli::kExitOk);
  return dir;
}

}  // namespace

TEST_CASE("help documents the flags of every command") {
  const auto score = run({"score", "--help"});
  CHECK(score.code == cli::kExitOk);
  for (const char* flag : {"--preset", "--src", "--hyp", "--src-emb", "--hyp-emb", "--pseudo-ref", "--lm", "--out",
                           "--workers", "--seed", "--config"}) {
    CHECK_MESSAGE(contains(score.out, flag), flag);
  }
  const auto mine = run({"mine", "--help"});
  CHECK(mine.code == cli::kExitOk);
  for (const char* flag : {"--strategy", "--k", "--rate", "--src-emb", "--tgt-emb", "--out"}) {
    CHECK_MESSAGE(contains(mine.out, flag), flag);
  }
  const auto eval = run({"eval", "--help"});
  CHECK(eval.code == cli::kExitOk);
  CHECK(contains(eval.out, "--scores"));
  CHECK(contains(eval.out, "--dataset"));
  for (const char* command : {"filter", "remap", "train-sent", "train-lm", "selflearn", "compare", "synth", "inspect"}) {
    CHECK_MESSAGE(run({command, "--help"}).code == cli::kExitOk, command);
  }
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("usage errors exit with code 1") {
  const auto unknown = run({"mine", "--stratgy", "ratio-margin"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK(contains(unknown.err, "did you mean --strategy"));

  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--dataset", "x.tsv"}).code == cli::kExitUsage);
  CHECK(run({"score", "--preset", "best"}).code == cli::kExitUsage);

  const auto dir = scratch_dir("cli_seed");
  const auto seedless = run({"synth", "--out-dir", dir.string()});
  CHECK(seedless.code == cli::kExitUsage);
  CHECK(contains(seedless.err, "requires --seed"));
}

TEST_CASE("data errors exit with code 2") {
  const auto dir = scratch_dir("cli_data");
  const auto missing = run({"inspect", "--store", (dir / "none.useb").string()});
  CHECK(missing.code == cli::kExitData);
  CHECK_FALSE(missing.err.empty());
}

TEST_CASE("inspect verifies exporter sidecars") {
  const auto ok = run({"inspect", "--store", fixture("words.useb").string(), "--sidecar",
                       fixture("words.useb.json").string()});
  CHECK(ok.code == cli::kExitOk);
  CHECK(contains(ok.out, "kind\tstatic-word\n"));
  CHECK(contains(ok.out, "dimension\t3\n"));
  CHECK(contains(ok.out, "count\t2\n"));
  CHECK(contains(ok.out, "sidecar\tok\n"));

  const auto bad = run({"inspect", "--store", fixture("words.useb").string(), "--sidecar",
                        fixture("words_bad.useb.json").string()});
  CHECK(bad.code == cli::kExitData);
  CHECK(contains(bad.err, "sidecar mismatch"));

  const auto text = run({"inspect", "--store", fixture("words.txt").string()});
  CHECK(text.code == cli::kExitOk);
  CHECK(contains(text.out, "count\t1\n"));
}

TEST_CASE("config files fill in flags that were not given") {
  const auto dir = scratch_dir("cli_config");
  std::ofstream(dir / "synth.conf") << "# planted pools\n[synth]\nsentences = 30\ndev_records = 5\nseed = 3\n";
  const auto a = run({"synth", "--config", (dir / "synth.conf").string(), "--out-dir", (dir / "a").string(),
                      "--sentences", "20"});
  REQUIRE(a.code == cli::kExitOk);
  CHECK(load_corpus(dir / "a" / "source.txt", TokenizerKind::kWhitespace).sentences.size() == 20);
  CHECK(load_eval_dataset(dir / "a" / "dev.tsv").size() == 5);
  const auto manifest = slurp(dir / "a" / "manifest.json");
  CHECK(contains(manifest, "\"seed\": 3"));
  CHECK(contains(manifest, "\"sentences\": \"20\""));

  std::ofstream(dir / "bad.conf") << "sentance = 30\n";
  const auto bad = run({"synth", "--config", (dir / "bad.conf").string(), "--out-dir", (dir / "b").string(),
                        "--seed", "1"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(contains(bad.err, "unknown config key 'sentance'"));

  std::ofstream(dir / "workers.conf") << "workers = 2\n";
  CHECK(run({"synth", "--config", (dir / "workers.conf").string(), "--out-dir", (dir / "c").string(), "--seed",
             "1"}).code == cli::kExitUsage);
}

TEST_CASE("score, train-lm and eval pipeline") {
  const auto dir = synth_dir("cli_pipeline");
  std::ofstream src(dir / "dev_src.txt");
  std::ofstream hyp(dir / "dev_hyp.txt");
  for (const auto& r : load_eval_dataset(dir / "dev.tsv")) {
    src << r.source << '\n';
    hyp << r.hypothesis << '\n';
  }
  src.close();
  hyp.close();

  REQUIRE(run({"train-lm", "--corpus", (dir / "target.txt").string(), "--out", (dir / "lm.uslm").string(), "--hyp",
               (dir / "dev_hyp.txt").string(), "--scores-out", (dir / "lm.tsv").string()}).code == cli::kExitOk);
  const std::vector<std::string> score = {"score", "--preset", "tuned", "--src", (dir / "dev_src.txt").string(),
                                          "--hyp", (dir / "dev_hyp.txt").string(), "--src-emb",
                                          (dir / "source.useb").string(), "--hyp-emb", (dir / "target.useb").string(),
                                          "--pseudo-ref", (dir / "dev_hyp.txt").string(), "--lm",
                                          (dir / "lm.uslm").string(), "--out", (dir / "scores.tsv").string()};
  REQUIRE(run(score).code == cli::kExitOk);
  CHECK(fs::exists(dir / "scores.tsv.manifest.json"));
  const auto first = slurp(dir / "scores.tsv");
  CHECK(first.rfind("#preset=tuned", 0) == 0);

  auto parallel = score;
  parallel.insert(parallel.end(), {"--workers", "3"});
  const auto manifest = slurp(dir / "scores.tsv.manifest.json");
  REQUIRE(run(parallel).code == cli::kExitOk);
  CHECK(slurp(dir / "scores.tsv") == first);
  CHECK(slurp(dir / "scores.tsv.manifest.json") == manifest);

  auto external = score;
  external[external.size() - 4] = "--lm-scores";
  external[external.size() - 3] = (dir / "lm.tsv").string();
  external.back() = (dir / "scores_ext.tsv").string();
  REQUIRE(run(external).code == cli::kExitOk);
  const auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
  CHECK(body(slurp(dir / "scores_ext.tsv")) == body(first));

  const auto eval = run({"eval", "--scores", (dir / "scores.tsv").string(), "--dataset", (dir / "dev.tsv").string(),
                         "--lp", "xx-yy"});
  CHECK(eval.code == cli::kExitOk);
  CHECK(eval.out.rfind("metric\tlp\tr\tn\tci_low\tci_high\nscores\txx-yy\t", 0) == 0);

  const auto compare = run({"compare", "--scores-a", (dir / "scores.tsv").string(), "--scores-b",
                            (dir / "scores.tsv").string(), "--dataset", (dir / "dev.tsv").string(), "--seed", "1",
                            "--resamples", "200"});
  CHECK(compare.code == cli::kExitOk);
  CHECK(contains(compare.out, "\t1\n"));
  CHECK(run({"compare", "--scores-a", (dir / "scores.tsv").string(), "--scores-b", (dir / "scores.tsv").string(),
             "--dataset", (dir / "dev.tsv").string()}).code == cli::kExitUsage);

  const auto mismatch = run({"eval", "--scores", (dir / "scores.tsv").string(), "--dataset",
                             (dir / "gold.tsv").string()});
  CHECK(mismatch.code == cli::kExitData);
}

TEST_CASE("mine, filter, remap and train-sent chain") {
  const auto dir = synth_dir("cli_chain", 300);
  const auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run({"mine", "--src", p("source.txt"), "--tgt", p("target.txt"), "--src-emb", p("source.useb"), "--tgt-emb",
               p("target.useb"), "--rate", "0.2", "--out", p("mined.tsv")}).code == cli::kExitOk);
  CHECK(load_pairs(p("mined.tsv")).size() == 60);

  const auto filtered = run({"filter", "--pairs", p("mined.tsv"), "--out", p("filtered.tsv")});
  CHECK(filtered.code == cli::kExitOk);
  CHECK(contains(filtered.out, "filter.kept\t"));

  const auto remapped = run({"remap", "--pairs", p("filtered.tsv"), "--src-emb", p("source.useb"), "--tgt-emb",
                             p("target.useb"), "--out", p("clp.useb"), "--src-out", p("source_mapped.useb")});
  CHECK(remapped.code == cli::kExitOk);
  CHECK(fs::exists(dir / "source_mapped.useb"));

  REQUIRE(run({"mine", "--strategy", "ratio-margin", "--k", "5", "--src", p("source.txt"), "--tgt", p("target.txt"),
               "--src-emb", p("source_mapped.useb"), "--tgt-emb", p("target.useb"), "--rate", "0.2", "--dedup",
               "--out", p("margin.tsv")}).code == cli::kExitOk);
  const auto trained = run({"train-sent", "--pairs", p("margin.tsv"), "--src-emb", p("source_mapped.useb"),
                            "--tgt-emb", p("target.useb"), "--batch-size", "16", "--lr", "0.01", "--seed", "5",
                            "--out", p("proj.useb"), "--loss-log", p("loss.tsv")});
  CHECK(trained.code == cli::kExitOk);
  CHECK(slurp(dir / "loss.tsv").rfind("step\tloss\n0\t", 0) == 0);
  CHECK(run({"train-sent", "--pairs", p("margin.tsv"), "--src-emb", p("source_mapped.useb"), "--tgt-emb",
             p("target.useb"), "--out", p("proj2.useb")}).code == cli::kExitUsage);

  const auto snt = run({"score", "--metric", "snt", "--src", p("source.txt"), "--hyp", p("target.txt"), "--src-emb",
                        p("source_mapped.useb"), "--hyp-emb", p("target.useb"), "--projection", p("proj.useb"),
                        "--out", p("snt.tsv")});
  CHECK(snt.code == cli::kExitOk);
}

TEST_CASE("selflearn runs are byte-identical across worker counts") {
  const auto dir = synth_dir("cli_selflearn");
  const auto run_dir = dir / "run";
  const auto p = [&](const char* name) { return (dir / name).string(); };
  const std::vector<std::string> args = {"selflearn", "--track", "remap", "--iterations", "1", "--src",
                                         p("source.txt"), "--tgt", p("target.txt"), "--src-emb", p("source.useb"),
                                         "--tgt-emb", p("target.useb"), "--gold", p("gold.tsv"), "--dev", p("dev.tsv"),
                                         "--run-dir", run_dir.string(), "--seed", "11"};
  const auto first = run(args);
  REQUIRE(first.code == cli::kExitOk);
  CHECK(first.out.rfind("iteration\tmined_pairs\t", 0) == 0);
  const auto manifest = slurp(run_dir / "manifest.json");
  const auto reports = slurp(run_dir / "reports.tsv");
  CHECK(contains(manifest, "\"command\": \"selflearn\""));
  CHECK(contains(manifest, "\"seed\": 11"));
  CHECK_FALSE(contains(manifest, "workers"));

  fs::remove_all(run_dir);
  auto parallel = args;
  parallel.insert(parallel.end(), {"--workers", "4"});
  REQUIRE(run(parallel).code == cli::kExitOk);
  CHECK(slurp(run_dir / "manifest.json") == manifest);
  CHECK(slurp(run_dir / "reports.tsv") == reports);
}
