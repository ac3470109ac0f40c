#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "reluflow/linalg.hpp"

namespace reluflow {

/// Principal components of the rows of a matrix (mean-centered), computed
/// from the eigendecomposition of whichever Gram matrix is smaller.
struct PcaResult {
  Matrix components;                    // k x d, orthonormal rows
  std::vector<double> eigenvalues;     // descending
  std::vector<double> explained_ratio; // eigenvalue / total variance
};

inline PcaResult pca_top_k(const Matrix& rows, std::size_t k,
                           std::size_t dense_cap = 2000) {
  const std::size_t m = rows.rows, d = rows.cols;
  if (m < 2 || d < 1) throw std::invalid_argument("pca needs >= 2 rows");
  if (std::min(m, d) > dense_cap)
    throw std::invalid_argument(
        "pca: Gram side " + std::to_string(std::min(m, d)) +
        " exceeds the dense cap " + std::to_string(dense_cap) +
        "; use a smaller instance");
  k = std::min(k, std::min(m, d));

  Eigen::MatrixXd a(m, d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = rows(i, j);
  Eigen::RowVectorXd mean = a.colwise().mean();
  a.rowwise() -= mean;

  PcaResult out;
  out.components = Matrix(k, d);
  Eigen::VectorXd evals;
  Eigen::MatrixXd basis;  // d x k, columns are components
  if (d <= m) {
    Eigen::MatrixXd gram = a.transpose() * a;  // d x d
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    evals = es.eigenvalues();
    basis = es.eigenvectors();  // ascending order
    // take the top k columns, descending
    Eigen::MatrixXd top(d, k);
    Eigen::VectorXd top_vals(k);
    for (std::size_t i = 0; i < k; ++i) {
      top.col(i) = basis.col(d - 1 - i);
      top_vals(i) = evals(d - 1 - i);
    }
    basis = top;
    evals = top_vals;
  } else {
    Eigen::MatrixXd gram = a * a.transpose();  // m x m
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    Eigen::MatrixXd top(d, k);
    Eigen::VectorXd top_vals(k);
    for (std::size_t i = 0; i < k; ++i) {
      double lam = es.eigenvalues()(m - 1 - i);
      Eigen::VectorXd v = a.transpose() * es.eigenvectors().col(m - 1 - i);
      double norm = v.norm();
      top.col(i) = norm > 0 ? Eigen::VectorXd(v / norm) : v;
      top_vals(i) = lam;
    }
    basis = top;
    evals = top_vals;
  }

  double total = (a.array() * a.array()).sum();
  out.eigenvalues.resize(k);
  out.explained_ratio.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.eigenvalues[i] = std::max(0.0, evals(i));
    out.explained_ratio[i] = total > 0.0 ? out.eigenvalues[i] / total : 0.0;
    for (std::size_t j = 0; j < d; ++j) out.components(i, j) = basis(j, i);
  }
  return out;
}

/// Projection of one row onto the first two components, in polar form.
struct PolarPoint {
  double radius = 0.0;
  double angle = 0.0;
};

inline PolarPoint project_polar(const PcaResult& pca, std::span<const double> w) {
  if (pca.components.rows < 2)
    throw std::invalid_argument("polar projection needs >= 2 components");
  double x = dot(pca.components.row(0), w);
  double y = dot(pca.components.row(1), w);
  return {std::hypot(x, y), std::atan2(y, x)};
}

}  // namespace reluflow
