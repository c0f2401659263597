#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "uscore/types.hpp"

namespace uscore::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

// Haar-ish random orthogonal matrix via QR of a Gaussian matrix.
inline Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix g = random_matrix(rng, d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (r(k, k) < 0) q.col(k) = -q.col(k);
  }
  return q;
}

// Minimum mean matched cost over all n! permutations (uniform equal-length WMD).
inline double permutation_wmd(const Matrix& x, const Matrix& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += (x.row(static_cast<Eigen::Index>(i)) - y.row(static_cast<Eigen::Index>(perm[i]))).norm();
    }
    best = std::min(best, total / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Central finite-difference gradient of f at p.
template <typename F>
Matrix finite_difference(F&& f, const Matrix& p, double h) {
  Matrix grad(p.rows(), p.cols());
  Matrix probe = p;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

// Mean over rows i of -s_ii + log sum_j exp(s_ij), s_ij = cos(P x_i, P y_j) / tau,
// with j = i left out of the sum unless include_positive. Written directly from
// the definition with a plain max-shifted log-sum-exp.
inline double reference_contrastive_loss(const Matrix& x, const Matrix& y, const Matrix& p, double tau,
                                         bool include_positive) {
  const Eigen::Index n = x.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector a = p * x.row(i).transpose();
    std::vector<double> s(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector b = p * y.row(j).transpose();
      s[static_cast<std::size_t>(j)] = a.dot(b) / (a.norm() * b.norm()) / tau;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i || include_positive) mx = std::max(mx, s[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i || include_positive) sum += std::exp(s[static_cast<std::size_t>(j)] - mx);
    }
    total += -s[static_cast<std::size_t>(i)] + mx + std::log(sum);
  }
  return total / static_cast<double>(n);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("uscore_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

#ifdef USCORE_FIXTURE_DIR
inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(USCORE_FIXTURE_DIR) / name; }
#endif

}  // namespace uscore::testing
