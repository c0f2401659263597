#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "uscore/tokenizer.hpp"
#include "uscore/types.hpp"

namespace uscore::transport {

// Longest sentence accepted by the exact solver.
inline constexpr std::size_t kMaxExactLength = 256;

// Pairwise Euclidean distances: entry (i, j) = ||x_i - y_j||.
struct CostMatrix {
  Matrix values;
  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Flows F with row sums source_marginal and column sums target_marginal.
struct TransportPlan {
  Matrix flows;
  Vector source_marginal;
  Vector target_marginal;
};

struct Marginals {
  Vector source;
  Vector target;
};

enum class Solver {
  kExact,     // transportation network simplex
  kSinkhorn,  // entropic approximation; opt-in only
};

struct WmdOptions {
  Solver solver = Solver::kExact;
  double sinkhorn_epsilon = 0.01;  // relative to the largest cost
  int sinkhorn_iterations = 2000;
};

struct WmdResult {
  double distance = 0.0;
  TransportPlan plan;
};

// x and y hold one embedding per row.
CostMatrix cost_matrix(const Matrix& x, const Matrix& y);

// Minimum-cost transport between the two bags of embeddings. Marginals
// default to uniform 1/|x| and 1/|y|.
WmdResult wmd(const Matrix& x, const Matrix& y, const std::optional<Marginals>& marginals = std::nullopt,
              const WmdOptions& options = {});

// Exact optimal transport for a precomputed cost matrix.
WmdResult solve_exact(const CostMatrix& cost, const Vector& source, const Vector& target);

// ||sum_i d_i x_i - sum_j d'_j y_j||; a lower bound of wmd().
double wcd(const Matrix& x, const Matrix& y, const std::optional<Marginals>& marginals = std::nullopt);

// Weighted centroid with uniform weights.
Vector centroid(const Matrix& x);

// For every source index i, (i, argmax_j F_ij) when that flow is at least
// min_flow; ties go to the lowest j.
std::vector<std::pair<std::size_t, std::size_t>> align_indices_from_plan(const TransportPlan& plan, double min_flow);

std::vector<std::pair<std::string, std::string>> align_from_plan(const TransportPlan& plan, const TokenizedSentence& x,
                                                                 const TokenizedSentence& y, double min_flow);

// Debug dump: one "i<TAB>j<TAB>flow" line per non-zero flow.
void write_plan_tsv(std::ostream& out, const TransportPlan& plan);

}  // namespace uscore::transport
