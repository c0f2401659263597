#include "uscore/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "uscore/error.hpp"
#include "uscore/parallel.hpp"
#include "uscore/random.hpp"

namespace uscore::eval {

namespace {

constexpr double kZ95 = 1.96;
constexpr std::size_t kBootstrapBlock = 250;

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ArgumentError("score vectors differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a < 3) throw ArgumentError("correlation needs at least 3 samples");
}

// r over the index multiset `idx`; nullopt when a side is constant.
std::optional<double> correlation(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<std::size_t>& idx) {
  double mx = 0.0;
  double my = 0.0;
  for (const auto i : idx) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(idx.size());
  my /= static_cast<double>(idx.size());
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (const auto i : idx) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> zscores(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw UndefinedCorrelationError("constant score vector: correlation undefined");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  return out;
}

double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
  const auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  if (!(se2 > 0.0)) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

}  // namespace

CorrelationResult pearson(const std::vector<double>& metric, const std::vector<double>& human) {
  check_lengths(metric.size(), human.size());
  std::vector<std::size_t> idx(metric.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto r = correlation(metric, human, idx);
  if (!r) throw UndefinedCorrelationError("constant score vector: correlation undefined");
  CorrelationResult out;
  out.r = *r;
  out.n = metric.size();
  if (out.n > 3) {
    const double z = std::atanh(out.r);
    const double se = 1.0 / std::sqrt(static_cast<double>(out.n - 3));
    out.fisher_ci_low = std::min(out.r, std::tanh(z - kZ95 * se));
    out.fisher_ci_high = std::max(out.r, std::tanh(z + kZ95 * se));
  }
  return out;
}

double precision_at_n(const std::vector<std::vector<std::size_t>>& retrieved,
                      const std::map<std::size_t, std::size_t>& gold, std::size_t n) {
  if (n == 0) throw ArgumentError("N must be at least 1");
  if (retrieved.empty()) throw ArgumentError("no queries to evaluate");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < retrieved.size(); ++q) {
    const auto g = gold.find(q);
    if (g == gold.end()) throw ArgumentError("query " + std::to_string(q) + " has no gold index");
    const auto& list = retrieved[q];
    const auto end = list.begin() + static_cast<std::ptrdiff_t>(std::min(n, list.size()));
    if (std::find(list.begin(), end, g->second) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(retrieved.size());
}

CompareMethod parse_compare_method(std::string_view name) {
  if (name == "bootstrap") return CompareMethod::kBootstrap;
  if (name == "t-test") return CompareMethod::kTTest;
  throw ArgumentError("unknown comparison method '" + std::string(name) + "' (bootstrap, t-test)");
}

std::string_view to_string(CompareMethod method) { return method == CompareMethod::kBootstrap ? "bootstrap" : "t-test"; }

CompareResult compare_metrics(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                              const std::vector<double>& human, const CompareOptions& options) {
  check_lengths(scores_a.size(), human.size());
  check_lengths(scores_b.size(), human.size());
  CompareResult out;
  out.r_a = pearson(scores_a, human).r;
  out.r_b = pearson(scores_b, human).r;

  if (options.method == CompareMethod::kTTest) {
    const auto za = zscores(scores_a);
    const auto zb = zscores(scores_b);
    const auto zh = zscores(human);
    std::vector<double> pa(za.size());
    std::vector<double> pb(zb.size());
    for (std::size_t i = 0; i < za.size(); ++i) {
      pa[i] = za[i] * zh[i];
      pb[i] = zb[i] * zh[i];
    }
    out.p_value = welch_p(pa, pb);
    return out;
  }

  if (options.resamples == 0) throw ArgumentError("bootstrap needs at least one resample");
  const double delta = out.r_a - out.r_b;
  const std::size_t n = human.size();
  const std::size_t blocks = (options.resamples + kBootstrapBlock - 1) / kBootstrapBlock;
  std::vector<std::size_t> extreme(blocks, 0);
  // Each block of resamples draws from its own stream, so the count does not
  // depend on how blocks are spread over workers.
  parallel_for(blocks, options.workers, [&](std::size_t b) {
    random::Engine rng(random::derive_seed(options.seed, b));
    const std::size_t begin = b * kBootstrapBlock;
    const std::size_t end = std::min(options.resamples, begin + kBootstrapBlock);
    std::vector<std::size_t> idx(n);
    for (std::size_t s = begin; s < end; ++s) {
      for (auto& i : idx) i = random::bounded(rng, n);
      const auto ra = correlation(scores_a, human, idx);
      const auto rb = correlation(scores_b, human, idx);
      // A resample without variance has no defined difference; count it against
      // rejecting the null.
      if (!ra || !rb || std::abs((*ra - *rb) - delta) >= std::abs(delta)) ++extreme[b];
    }
  });
  std::size_t count = 0;
  for (const auto c : extreme) count += c;
  out.p_value = static_cast<double>(1 + count) / static_cast<double>(options.resamples + 1);
  return out;
}

void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
  const auto precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "metric\tlp\tr\tn\tci_low\tci_high\n";
  for (const auto& row : rows) {
    out << row.metric << '\t' << row.language_pair << '\t' << row.correlation.r << '\t' << row.correlation.n << '\t'
        << row.correlation.fisher_ci_low << '\t' << row.correlation.fisher_ci_high << '\n';
  }
  out.precision(precision);
}

void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_report(out, rows);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace uscore::eval
