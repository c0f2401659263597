#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "uscore/corpusio.hpp"
#include "uscore/error.hpp"
#include "uscore/store.hpp"
#include "uscore/tokenizer.hpp"

using namespace uscore;
using uscore::testing::fixture;
using uscore::testing::scratch_dir;

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("load_corpus drops empty lines and keeps order") {
  const auto dir = scratch_dir("corpus_basic");
  write_file(dir / "c.txt", "Hello world\n\nBye\n");
  const auto c = load_corpus(dir / "c.txt", TokenizerKind::kWhitespace);
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].tokens == std::vector<std::string>{"Hello", "world"});
  CHECK(c.sentences[1].tokens == std::vector<std::string>{"Bye"});
  CHECK(c.sentences[0].text == "Hello world");
  CHECK(c.line_index == std::vector<std::size_t>{0, 2});
  CHECK(c.lines_read == 3);
  CHECK(c.empty_lines_dropped == 1);
}

TEST_CASE("load_corpus of an empty file is empty") {
  const auto dir = scratch_dir("corpus_empty");
  write_file(dir / "c.txt", "");
  CHECK(load_corpus(dir / "c.txt").sentences.empty());
}

TEST_CASE("load_corpus keeps long lines intact") {
  const auto dir = scratch_dir("corpus_long");
  std::string line;
  for (int i = 0; i < 31; ++i) line += (i ? " w" : "w") + std::to_string(i);
  write_file(dir / "c.txt", line + "\n");
  const auto c = load_corpus(dir / "c.txt");
  REQUIRE(c.sentences.size() == 1);
  CHECK(c.sentences[0].tokens.size() == 31);
}

TEST_CASE("load_corpus reports the line of invalid UTF-8") {
  const auto dir = scratch_dir("corpus_utf8");
  write_file(dir / "c.txt", "ok\nfine\nbad \xff byte\n");
  try {
    load_corpus(dir / "c.txt");
    FAIL("expected a decode error");
  } catch (const DecodeError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_corpus(dir / "missing.txt"), IoError);
}

TEST_CASE("load_corpus never merges or splits lines") {
  const auto dir = scratch_dir("corpus_lines");
  std::mt19937_64 rng(3);
  std::ostringstream body;
  std::vector<std::string> lines;
  for (int i = 0; i < 200; ++i) {
    std::string l = "s" + std::to_string(i);
    for (std::uint64_t k = 0; k < rng() % 6; ++k) l += " t" + std::to_string(rng() % 50);
    lines.push_back(l);
    body << l << '\n';
  }
  write_file(dir / "c.txt", body.str());
  const auto c = load_corpus(dir / "c.txt");
  REQUIRE(c.sentences.size() == lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) CHECK(c.sentences[i].text == lines[i]);
}

TEST_CASE("default tokenizer detaches punctuation and normalizes to NFC") {
  CHECK(tokenize("Hello, world!") == std::vector<std::string>{"Hello", ",", "world", "!"});
  CHECK(tokenize("Hello, world!", TokenizerKind::kWhitespace) == std::vector<std::string>{"Hello,", "world!"});
  // "e" + combining acute composes to a single code point.
  CHECK(tokenize("caf\x65\xcc\x81") == std::vector<std::string>{"caf\xc3\xa9"});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("tokenization is deterministic and idempotent on joined tokens") {
  for (const std::string text : {"Das ist gut.", "¿Qué tal?  Bien, gracias.", "a-b (c) \"d\"", "x"}) {
    const auto once = tokenize(text);
    CHECK(once == tokenize(text));
    CHECK(!once.empty());
    CHECK(tokenize(join_tokens(once)) == once);
  }
}

TEST_CASE("binary store fixture written by an independent writer") {
  const auto store = load_embedding_store(fixture("words.useb"));
  CHECK(store.kind() == StoreKind::kStaticWord);
  CHECK(store.size() == 2);
  CHECK(store.dimension() == 3);
  REQUIRE(store.find("wörld").has_value());
  const auto w = store.row(*store.find("wörld"));
  CHECK(w[0] == static_cast<double>(1.0f / 3.0f));
  CHECK(w[2] == -7.5);
  const auto check = check_sidecar(store, fixture("words.useb.json"));
  CHECK(check.ok);
  CHECK(check.problems.empty());
}

TEST_CASE("sidecar mismatches are reported field by field") {
  const auto store = load_embedding_store(fixture("words.useb"));
  const auto check = check_sidecar(store, fixture("words_bad.useb.json"));
  CHECK_FALSE(check.ok);
  CHECK(check.problems.size() == 2);
  const auto dir = scratch_dir("sidecar_bad_json");
  write_file(dir / "s.json", "{not json");
  CHECK_THROWS_AS(check_sidecar(store, dir / "s.json"), FormatError);
}

TEST_CASE("contextual fixture keys by sentence and token") {
  const auto store = load_embedding_store(fixture("contextual.useb"));
  CHECK(store.kind() == StoreKind::kContextualToken);
  CHECK(check_sidecar(store, fixture("contextual.useb.json")).ok);
  TokenLookup lookup(store);
  const auto m = lookup.embed(make_sentence("a b"), 0);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 1) == 1.0);
  CHECK_THROWS_AS(lookup.embed(make_sentence("a b"), 1), LookupError);
}

TEST_CASE("text store fixture") {
  const auto store = load_embedding_store(fixture("words.txt"));
  CHECK(store.size() == 1);
  CHECK(store.dimension() == 2);
  CHECK(store.row(0)[0] == 0.5);
  CHECK(store.row(0)[1] == -0.25);
  CHECK(store.key(0) == "foo");
}

TEST_CASE("binary round trip is bit exact") {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal;
  EmbeddingStore store(StoreKind::kStaticWord, 64);
  for (int i = 0; i < 100; ++i) {
    Vector v(64);
    for (auto& x : v) x = normal(rng);
    store.add("w" + std::to_string(i), v);
  }
  const auto dir = scratch_dir("store_roundtrip");
  save_binary(store, dir / "s.useb");
  const auto back = load_embedding_store(dir / "s.useb");
  CHECK(back.keys() == store.keys());
  CHECK(back.matrix() == store.matrix());
  CHECK(float_checksum(back) == float_checksum(store));
  save_binary(back, dir / "t.useb");
  CHECK(read_file(dir / "s.useb") == read_file(dir / "t.useb"));
}

TEST_CASE("text round trip is within 1e-6") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  EmbeddingStore store(StoreKind::kStaticWord, 8);
  for (int i = 0; i < 20; ++i) {
    Vector v(8);
    for (auto& x : v) x = normal(rng);
    store.add("w" + std::to_string(i), v);
  }
  const auto dir = scratch_dir("store_text");
  save_text(store, dir / "s.txt");
  const auto back = load_embedding_store(dir / "s.txt");
  CHECK(back.keys() == store.keys());
  CHECK((back.matrix() - store.matrix()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("malformed stores are rejected") {
  const auto dir = scratch_dir("store_bad");
  write_file(dir / "magic.useb", "USEX\x01");
  CHECK_THROWS_AS(load_embedding_store(dir / "magic.useb"), FormatError);
  write_file(dir / "dims.txt", "2 2\na 1 2\nb 1 2 3\n");
  CHECK_THROWS_AS(load_embedding_store(dir / "dims.txt"), FormatError);
  const auto good = read_file(fixture("words.useb"));
  write_file(dir / "trunc.useb", good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(load_embedding_store(dir / "trunc.useb"), FormatError);
  write_file(dir / "trail.useb", good + "x");
  CHECK_THROWS_AS(load_embedding_store(dir / "trail.useb"), FormatError);
  write_file(dir / "nan.txt", "1 2\na nan 1\n");
  CHECK_THROWS_AS(load_embedding_store(dir / "nan.txt"), FormatError);
  write_file(dir / "dup.txt", "2 1\na 1\na 2\n");
  CHECK_THROWS_AS(load_embedding_store(dir / "dup.txt"), FormatError);
}

TEST_CASE("store invariants are enforced on construction") {
  EmbeddingStore store(StoreKind::kStaticWord, 2);
  store.add("a", Vector::Ones(2));
  CHECK_THROWS_AS(store.add("a", Vector::Ones(2)), ArgumentError);
  CHECK_THROWS_AS(store.add("b", Vector::Ones(3)), ArgumentError);
  Vector bad = Vector::Ones(2);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(store.add("c", bad), ArgumentError);
  CHECK_THROWS_AS(EmbeddingStore(StoreKind::kStaticWord, 0), ArgumentError);
}

TEST_CASE("eval dataset rows, header detection and parse errors") {
  const auto dir = scratch_dir("evalset");
  write_file(dir / "a.tsv", "s1\th1\t0.5\ns2\th2\t-1\ns3\th3\t2e-1\tref3\n");
  const auto a = load_eval_dataset(dir / "a.tsv");
  REQUIRE(a.size() == 3);
  CHECK(a[1].human_score == -1.0);
  CHECK_FALSE(a[0].reference.has_value());
  CHECK(a[2].reference == std::optional<std::string>("ref3"));

  write_file(dir / "b.tsv", "src\thyp\tscore\nx\ty\t0.25\n");
  const auto b = load_eval_dataset(dir / "b.tsv");
  REQUIRE(b.size() == 1);
  CHECK(b[0].source == "x");
  CHECK(b[0].human_score == 0.25);

  write_file(dir / "c.tsv", "x\ty\t0.1\nx\ty\tabc\n");
  try {
    load_eval_dataset(dir / "c.tsv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("eval dataset and pairs round trip") {
  const auto dir = scratch_dir("evalset_rt");
  std::vector<EvalRecord> records = {{"a b", "c d", 0.1, std::nullopt}, {"e", "f", 1.0 / 3.0, "g"}};
  write_eval_dataset(dir / "r.tsv", records);
  const auto back = load_eval_dataset(dir / "r.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].human_score == 1.0 / 3.0);
  CHECK(back[1].reference == std::optional<std::string>("g"));

  std::vector<ScoredPair> pairs = {{make_sentence("a b"), make_sentence("x y"), 1.0 / 7.0, 3, 4},
                                   {make_sentence("c"), make_sentence("z"), -0.5, std::nullopt, std::nullopt}};
  write_pairs(dir / "p.tsv", pairs);
  const auto p = load_pairs(dir / "p.tsv");
  REQUIRE(p.size() == 2);
  CHECK(p[0].score == 1.0 / 7.0);
  CHECK(p[0].source_index == std::optional<std::size_t>(3));
  CHECK(p[0].target.tokens == std::vector<std::string>{"x", "y"});
  CHECK_FALSE(p[1].source_index.has_value());
}

TEST_CASE("parse_double accepts only full finite numbers") {
  CHECK(parse_double("1.5") == std::optional<double>(1.5));
  CHECK(parse_double("-2e3") == std::optional<double>(-2000.0));
  CHECK_FALSE(parse_double("1.5x").has_value());
  CHECK_FALSE(parse_double("").has_value());
  CHECK_FALSE(parse_double("inf").has_value());
  CHECK_FALSE(parse_double("nan").has_value());
}
