#include "uscore/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "uscore/error.hpp"

namespace uscore::transport {

namespace {

void check_pair(const Matrix& x, const Matrix& y) {
  if (x.rows() == 0 || y.rows() == 0) throw ArgumentError("transport needs non-empty embedding lists");
  if (x.cols() != y.cols()) {
    throw ArgumentError("embedding dimension mismatch: " + std::to_string(x.cols()) + " vs " +
                        std::to_string(y.cols()));
  }
}

void check_marginal(const Vector& d, Eigen::Index expected, const char* side) {
  if (d.size() != expected) {
    throw ArgumentError(std::string(side) + " marginal has length " + std::to_string(d.size()) + ", expected " +
                        std::to_string(expected));
  }
  if (!d.allFinite() || (d.array() < 0.0).any()) {
    throw ArgumentError(std::string(side) + " marginal must be finite and non-negative");
  }
  const double sum = d.sum();
  if (sum <= 0.0) throw ArgumentError(std::string(side) + " marginal is degenerate (zero total mass)");
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ArgumentError(std::string(side) + " marginal sums to " + std::to_string(sum) + ", expected 1");
  }
}

Marginals resolve(const Matrix& x, const Matrix& y, const std::optional<Marginals>& marginals) {
  if (marginals) {
    check_marginal(marginals->source, x.rows(), "source");
    check_marginal(marginals->target, y.rows(), "target");
    return *marginals;
  }
  return {Vector::Constant(x.rows(), 1.0 / static_cast<double>(x.rows())),
          Vector::Constant(y.rows(), 1.0 / static_cast<double>(y.rows()))};
}

// Transportation simplex over the bipartite graph rows x cols. The basis is a
// spanning tree of n + m - 1 cells (degenerate zero-flow cells included).
class NetworkSimplex {
 public:
  NetworkSimplex(const Matrix& cost, const Vector& supply, const Vector& demand)
      : cost_(cost), n_(static_cast<int>(cost.rows())), m_(static_cast<int>(cost.cols())) {
    flows_ = Matrix::Zero(n_, m_);
    basic_.assign(static_cast<std::size_t>(n_) * m_, 0);
    north_west_corner(supply, demand);
  }

  Matrix solve() {
    const double scale = cost_.size() ? cost_.maxCoeff() : 0.0;
    const double tol = 1e-11 * scale;
    const int nodes = n_ + m_;
    u_.resize(n_);
    v_.resize(m_);
    parent_node_.resize(nodes);
    parent_cell_.resize(nodes);
    depth_.resize(nodes);
    int degenerate_run = 0;
    const long max_pivots = 50L * (n_ + m_) * (n_ + m_) + 1000;
    for (long pivot = 0;; ++pivot) {
      if (pivot > max_pivots) throw Error("transport simplex failed to converge");
      build_tree();
      const bool bland = degenerate_run > 2 * (n_ + m_);
      const auto entering = find_entering(tol, bland);
      if (!entering) break;
      const double theta = pivot_on(entering->first, entering->second);
      degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    }
    return flows_;
  }

 private:
  struct Cell {
    int i;
    int j;
  };

  void north_west_corner(const Vector& supply, const Vector& demand) {
    Vector a = supply;
    Vector b = demand;
    int i = 0;
    int j = 0;
    while (true) {
      const double f = std::min(a[i], b[j]);
      add_basic(i, j, f);
      a[i] -= f;
      b[j] -= f;
      if (i == n_ - 1 && j == m_ - 1) break;
      if (i == n_ - 1) {
        ++j;
      } else if (j == m_ - 1) {
        ++i;
      } else if (a[i] <= b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    // Absorb rounding residue of unequal totals into the last cell.
    flows_(n_ - 1, m_ - 1) += std::max(0.0, std::min(a[n_ - 1], b[m_ - 1]));
  }

  void add_basic(int i, int j, double f) {
    cells_.push_back({i, j});
    basic_[index(i, j)] = 1;
    flows_(i, j) = f;
  }

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * m_ + j; }

  // Potentials with u_0 = 0 and parent pointers rooted at row 0.
  void build_tree() {
    const int nodes = n_ + m_;
    adjacency_.assign(nodes, {});
    for (int c = 0; c < static_cast<int>(cells_.size()); ++c) {
      adjacency_[cells_[c].i].push_back(c);
      adjacency_[n_ + cells_[c].j].push_back(c);
    }
    std::fill(depth_.begin(), depth_.end(), -1);
    stack_.clear();
    stack_.push_back(0);
    depth_[0] = 0;
    parent_node_[0] = -1;
    parent_cell_[0] = -1;
    u_[0] = 0.0;
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      for (const int c : adjacency_[node]) {
        const Cell cell = cells_[c];
        const int other = node < n_ ? n_ + cell.j : cell.i;
        if (depth_[other] >= 0) continue;
        depth_[other] = depth_[node] + 1;
        parent_node_[other] = node;
        parent_cell_[other] = c;
        if (other >= n_) {
          v_[cell.j] = cost_(cell.i, cell.j) - u_[cell.i];
        } else {
          u_[cell.i] = cost_(cell.i, cell.j) - v_[cell.j];
        }
        stack_.push_back(other);
      }
    }
  }

  std::optional<std::pair<int, int>> find_entering(double tol, bool bland) const {
    std::optional<std::pair<int, int>> best;
    double best_r = -tol;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j) {
        if (basic_[index(i, j)]) continue;
        const double r = cost_(i, j) - u_[i] - v_[j];
        if (r < best_r) {
          best = std::pair{i, j};
          if (bland) return best;
          best_r = r;
        }
      }
    }
    return best;
  }

  // Pushes flow around the cycle closed by (i, j); returns the pushed amount.
  double pivot_on(int ei, int ej) {
    // Tree paths from the column node and the row node up to their common ancestor.
    std::vector<int> from_col;
    std::vector<int> from_row;
    int a = n_ + ej;
    int b = ei;
    while (depth_[a] > depth_[b]) {
      from_col.push_back(parent_cell_[a]);
      a = parent_node_[a];
    }
    while (depth_[b] > depth_[a]) {
      from_row.push_back(parent_cell_[b]);
      b = parent_node_[b];
    }
    while (a != b) {
      from_col.push_back(parent_cell_[a]);
      a = parent_node_[a];
      from_row.push_back(parent_cell_[b]);
      b = parent_node_[b];
    }
    // Cycle order after the entering cell: column path upwards, then row path downwards.
    cycle_.assign(from_col.begin(), from_col.end());
    cycle_.insert(cycle_.end(), from_row.rbegin(), from_row.rend());

    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    for (std::size_t p = 0; p < cycle_.size(); p += 2) {
      const Cell c = cells_[cycle_[p]];
      const double f = flows_(c.i, c.j);
      if (f < theta || (f == theta && index(c.i, c.j) < index(cells_[leaving].i, cells_[leaving].j))) {
        theta = f;
        leaving = cycle_[p];
      }
    }
    for (std::size_t p = 0; p < cycle_.size(); ++p) {
      const Cell c = cells_[cycle_[p]];
      if (p % 2 == 0) {
        flows_(c.i, c.j) -= theta;
      } else {
        flows_(c.i, c.j) += theta;
      }
    }
    const Cell out = cells_[leaving];
    flows_(out.i, out.j) = 0.0;
    basic_[index(out.i, out.j)] = 0;
    cells_[leaving] = {ei, ej};
    basic_[index(ei, ej)] = 1;
    flows_(ei, ej) = theta;
    return theta;
  }

  const Matrix& cost_;
  int n_;
  int m_;
  Matrix flows_;
  std::vector<char> basic_;
  std::vector<Cell> cells_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<double> u_;
  std::vector<double> v_;
  std::vector<int> parent_node_;
  std::vector<int> parent_cell_;
  std::vector<int> depth_;
  std::vector<int> stack_;
  std::vector<int> cycle_;
};

double log_sum_exp(const Eigen::ArrayXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v - mx).exp().sum());
}

WmdResult solve_sinkhorn(const CostMatrix& cost, const Vector& a, const Vector& b, const WmdOptions& options) {
  const Matrix& c = cost.values;
  const double scale = c.maxCoeff();
  WmdResult result;
  result.plan.source_marginal = a;
  result.plan.target_marginal = b;
  if (scale <= 0.0) {
    result.plan.flows = a * b.transpose();
    return result;
  }
  const double eps = options.sinkhorn_epsilon * scale;
  const Eigen::ArrayXd log_a = a.array().log();
  const Eigen::ArrayXd log_b = b.array().log();
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(a.size());
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(b.size());
  for (int it = 0; it < options.sinkhorn_iterations; ++it) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      f[i] = log_a[i] - log_sum_exp(g - c.row(i).transpose().array() / eps);
    }
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      g[j] = log_b[j] - log_sum_exp(f - c.col(j).array() / eps);
    }
  }
  Matrix flows(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      flows(i, j) = std::isfinite(f[i]) && std::isfinite(g[j]) ? std::exp(f[i] + g[j] - c(i, j) / eps) : 0.0;
    }
  }
  result.plan.flows = flows;
  result.distance = (flows.array() * c.array()).sum();
  return result;
}

}  // namespace

CostMatrix cost_matrix(const Matrix& x, const Matrix& y) {
  check_pair(x, y);
  Matrix c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).norm();
  }
  return {std::move(c)};
}

WmdResult solve_exact(const CostMatrix& cost, const Vector& source, const Vector& target) {
  NetworkSimplex simplex(cost.values, source, target);
  WmdResult result;
  result.plan.flows = simplex.solve();
  result.plan.source_marginal = source;
  result.plan.target_marginal = target;
  result.distance = (result.plan.flows.array() * cost.values.array()).sum();
  return result;
}

WmdResult wmd(const Matrix& x, const Matrix& y, const std::optional<Marginals>& marginals, const WmdOptions& options) {
  check_pair(x, y);
  if (static_cast<std::size_t>(std::max(x.rows(), y.rows())) > kMaxExactLength) {
    throw ArgumentError("sentence longer than " + std::to_string(kMaxExactLength) + " tokens");
  }
  const Marginals d = resolve(x, y, marginals);
  const CostMatrix cost = cost_matrix(x, y);
  if (options.solver == Solver::kSinkhorn) return solve_sinkhorn(cost, d.source, d.target, options);
  return solve_exact(cost, d.source, d.target);
}

Vector centroid(const Matrix& x) { return x.colwise().mean().transpose(); }

double wcd(const Matrix& x, const Matrix& y, const std::optional<Marginals>& marginals) {
  check_pair(x, y);
  const Marginals d = resolve(x, y, marginals);
  const Vector cx = x.transpose() * d.source;
  const Vector cy = y.transpose() * d.target;
  return (cx - cy).norm();
}

std::vector<std::pair<std::size_t, std::size_t>> align_indices_from_plan(const TransportPlan& plan, double min_flow) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const Matrix& f = plan.flows;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    if (f.cols() == 0) break;
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < f.cols(); ++j) {
      if (f(i, j) > f(i, best)) best = j;
    }
    if (f(i, best) >= min_flow) out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(best));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> align_from_plan(const TransportPlan& plan, const TokenizedSentence& x,
                                                                 const TokenizedSentence& y, double min_flow) {
  if (static_cast<std::size_t>(plan.flows.rows()) != x.tokens.size() ||
      static_cast<std::size_t>(plan.flows.cols()) != y.tokens.size()) {
    throw ArgumentError("plan is " + std::to_string(plan.flows.rows()) + "x" + std::to_string(plan.flows.cols()) +
                        " but sentences have " + std::to_string(x.tokens.size()) + " and " +
                        std::to_string(y.tokens.size()) + " tokens");
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [i, j] : align_indices_from_plan(plan, min_flow)) out.emplace_back(x.tokens[i], y.tokens[j]);
  return out;
}

void write_plan_tsv(std::ostream& out, const TransportPlan& plan) {
  const auto precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < plan.flows.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.flows.cols(); ++j) {
      if (plan.flows(i, j) != 0.0) out << i << '\t' << j << '\t' << plan.flows(i, j) << '\n';
    }
  }
  out.precision(precision);
}

}  // namespace uscore::transport
