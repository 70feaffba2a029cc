#pragma once

#include <filesystem>
#include <vector>

#include "episodica/tensor.hpp"

namespace episodica::pca {

struct SymmetricEigen {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // row i is the unit eigenvector of values[i], n x n row-major
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi on a symmetric n x n row-major matrix. Converged when the
/// off-diagonal Frobenius norm drops below tol * ||A||_F (or A is zero).
SymmetricEigen jacobi_eigen(std::vector<double> matrix, std::size_t n, double tol = 1e-10,
                            std::size_t max_sweeps = 100);

struct PcaModel {
  Tensor mean;                // [d]
  Tensor components;          // [k x d], orthonormal rows, descending variance
  Tensor explained_variance;  // [k]

  std::size_t in_dim() const { return components.dim(1); }
  std::size_t out_dim() const { return components.dim(0); }
};

/// Centers X, eigendecomposes the (n-1)-normalized covariance and keeps the top k
/// directions, each oriented so its largest-magnitude entry is positive.
PcaModel pca_fit(const Tensor& x, std::size_t k);
/// (X - mean) * components^T
Tensor pca_transform(const PcaModel& model, const Tensor& x);
/// Y * components + mean
Tensor pca_lift(const PcaModel& model, const Tensor& y);

/// Total variance of X (trace of its (n-1)-normalized covariance).
double total_variance(const Tensor& x);

void save_pca(const PcaModel& model, const std::filesystem::path& dir);
PcaModel load_pca(const std::filesystem::path& dir);

}  // namespace episodica::pca
