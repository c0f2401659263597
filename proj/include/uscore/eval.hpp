#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace uscore::eval {

struct CorrelationResult {
  double r = 0.0;
  std::size_t n = 0;
  double fisher_ci_low = -1.0;  // 95% Fisher-z interval
  double fisher_ci_high = 1.0;
};

// Product-moment correlation. Needs equal lengths >= 3; a constant input raises
// UndefinedCorrelationError.
CorrelationResult pearson(const std::vector<double>& metric, const std::vector<double>& human);

// Fraction of queries whose gold index is among their first n retrieved
// candidates. Query q is retrieved[q]; a shorter list counts what it has.
double precision_at_n(const std::vector<std::vector<std::size_t>>& retrieved,
                      const std::map<std::size_t, std::size_t>& gold, std::size_t n);

enum class CompareMethod { kBootstrap, kTTest };
CompareMethod parse_compare_method(std::string_view name);
std::string_view to_string(CompareMethod method);

struct CompareOptions {
  CompareMethod method = CompareMethod::kBootstrap;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct CompareResult {
  double r_a = 0.0;
  double r_b = 0.0;
  double p_value = 1.0;
};

// Two-sided test of r_a == r_b. Bootstrap: paired segment resampling,
// p = (1 + #{|d* - d| >= |d|}) / (B + 1) with d = r_a - r_b. t-test: Welch's
// test between the per-segment products z(a)_i z(h)_i and z(b)_i z(h)_i.
CompareResult compare_metrics(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                              const std::vector<double>& human, const CompareOptions& options = {});

struct ReportRow {
  std::string metric;
  std::string language_pair;
  CorrelationResult correlation;
};

// "metric<TAB>lp<TAB>r<TAB>n<TAB>ci_low<TAB>ci_high" with a header row.
void write_report(std::ostream& out, const std::vector<ReportRow>& rows);
void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);

}  // namespace uscore::eval
