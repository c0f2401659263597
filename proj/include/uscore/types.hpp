#pragma once

#include <Eigen/Dense>

namespace uscore {

// Row-per-item matrices: row i of an embedding matrix is the vector of item i.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace uscore
