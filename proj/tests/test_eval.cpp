#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "uscore/error.hpp"
#include "uscore/eval.hpp"

using namespace uscore;
using namespace uscore::eval;
using uscore::testing::scratch_dir;

namespace {

// Values below were computed independently with scipy.stats.
const std::vector<double> kHuman = {0.1, 0.5, -0.3, 0.9, 1.2, -1.0, 0.3, 0.0, 0.7, -0.4};
const std::vector<double> kMetricA = {0.2, 0.4, -0.1, 1.1, 0.9, -0.8, 0.1, 0.2, 0.5, -0.6};
const std::vector<double> kMetricB = {0.5, -0.2, 0.3, 0.1, 0.4, 0.2, -0.5, 0.6, 0.0, 0.3};

std::vector<double> affine(const std::vector<double>& v, double a, double b) {
  std::vector<double> out;
  for (const double x : v) out.push_back(a * x + b);
  return out;
}

}  // namespace

TEST_CASE("pearson closed-form cases") {
  CHECK(std::abs(pearson({1, 2, 3}, {2, 4, 6}).r - 1.0) <= 1e-15);
  CHECK(std::abs(pearson({1, 2, 3}, {3, 2, 1}).r + 1.0) <= 1e-15);
  CHECK(std::abs(pearson({1, 2, 3}, {1, 3, 2}).r - 0.5) <= 1e-15);
  CHECK(std::abs(pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 6}).r - 0.8219949365267865) <= 1e-12);
  CHECK(std::abs(pearson(kMetricA, kHuman).r - 0.9508894891922648) <= 1e-12);
  CHECK(pearson({1, 2, 3}, {1, 3, 2}).n == 3);
}

TEST_CASE("pearson errors") {
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {4, 4, 4}), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), ArgumentError);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), ArgumentError);
}

TEST_CASE("pearson affine invariance and symmetry") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> m;
    std::vector<double> h;
    for (int i = 0; i < 30; ++i) {
      h.push_back(normal(rng));
      m.push_back(h.back() * 0.3 + normal(rng));
    }
    const double r = pearson(m, h).r;
    const double a = t % 2 ? 2.5 : -0.7;
    const double sign = a > 0 ? 1.0 : -1.0;
    CHECK(std::abs(pearson(affine(m, a, 3.0), h).r - sign * r) <= 1e-12);
    CHECK(pearson(h, m).r == r);
  }
}

TEST_CASE("fisher interval") {
  const auto small = pearson({1, 2, 3}, {1, 3, 2});
  CHECK(small.fisher_ci_low == -1.0);
  CHECK(small.fisher_ci_high == 1.0);
  const auto c = pearson(kMetricA, kHuman);
  const double z = std::atanh(c.r);
  const double half = 1.96 / std::sqrt(7.0);
  CHECK(std::abs(c.fisher_ci_low - std::tanh(z - half)) <= 1e-12);
  CHECK(std::abs(c.fisher_ci_high - std::tanh(z + half)) <= 1e-12);
  CHECK(c.fisher_ci_low <= c.r);
  CHECK(c.r <= c.fisher_ci_high);
  const auto perfect = pearson({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10});
  CHECK(perfect.fisher_ci_low <= perfect.r);
  CHECK(perfect.r <= perfect.fisher_ci_high);
}

TEST_CASE("precision at n") {
  std::vector<std::vector<std::size_t>> identity;
  std::map<std::size_t, std::size_t> gold;
  for (std::size_t q = 0; q < 10; ++q) {
    identity.push_back({q, (q + 1) % 10});
    gold[q] = q;
  }
  CHECK(precision_at_n(identity, gold, 1) == 1.0);

  std::vector<std::vector<std::size_t>> never(10, std::vector<std::size_t>{99, 98});
  CHECK(precision_at_n(never, gold, 2) == 0.0);

  std::vector<std::vector<std::size_t>> mixed;
  for (std::size_t q = 0; q < 10; ++q) mixed.push_back(q < 4 ? std::vector<std::size_t>{50, q} : std::vector<std::size_t>{q, 50});
  CHECK(std::abs(precision_at_n(mixed, gold, 1) - 0.6) <= 1e-15);
  CHECK(precision_at_n(mixed, gold, 2) == 1.0);

  double previous = 0.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    const double p = precision_at_n(mixed, gold, n);
    CHECK(p >= previous);
    previous = p;
  }
  std::map<std::size_t, std::size_t> partial = {{0, 0}};
  CHECK_THROWS_AS(precision_at_n(mixed, partial, 1), ArgumentError);
  CHECK_THROWS_AS(precision_at_n(mixed, gold, 0), ArgumentError);
}

TEST_CASE("bootstrap comparison") {
  CompareOptions options;
  options.seed = 7;
  options.resamples = 2000;
  const auto same = compare_metrics(kMetricA, kMetricA, kHuman, options);
  CHECK(same.p_value == 1.0);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::vector<double> human;
  std::vector<double> noise;
  for (int i = 0; i < 500; ++i) {
    human.push_back(normal(rng));
    noise.push_back(normal(rng));
  }
  options.resamples = 10000;
  const auto strong = compare_metrics(human, noise, human, options);
  CHECK(strong.p_value < 0.01);
  CHECK(strong.r_a == 1.0);

  const auto again = compare_metrics(human, noise, human, options);
  CHECK(again.p_value == strong.p_value);
  options.workers = 4;
  CHECK(compare_metrics(human, noise, human, options).p_value == strong.p_value);

  CHECK_THROWS_AS(compare_metrics(kMetricA, kMetricB, {1, 2, 3}, options), ArgumentError);
}

TEST_CASE("t-test comparison matches Welch's test on score-human products") {
  CompareOptions options;
  options.method = CompareMethod::kTTest;
  const auto r = compare_metrics(kMetricA, kMetricB, kHuman, options);
  CHECK(std::abs(r.p_value - 0.012964851290796175) <= 1e-9);
  CHECK(std::abs(r.r_b + 0.19134558542029018) <= 1e-12);
  CHECK(compare_metrics(kMetricA, kMetricA, kHuman, options).p_value == 1.0);
  CHECK(parse_compare_method("t-test") == CompareMethod::kTTest);
  CHECK(to_string(CompareMethod::kBootstrap) == "bootstrap");
  CHECK_THROWS_AS(parse_compare_method("z-test"), ArgumentError);
}

TEST_CASE("report rows") {
  std::ostringstream out;
  write_report(out, {{"uscore", "de-en", pearson(kMetricA, kHuman)}});
  std::istringstream in(out.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "metric\tlp\tr\tn\tci_low\tci_high");
  CHECK(row.rfind("uscore\tde-en\t0.95088948919", 0) == 0);
  const auto dir = scratch_dir("eval_report");
  CHECK_NOTHROW(write_report(dir / "r.tsv", {}));
}
