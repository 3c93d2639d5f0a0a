#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <vector>

namespace rh {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<double>;

[[nodiscard]] bool is_symmetric(const Mat& A, double rel_tol = 1e-13);

/// Eigenvalues of A. Block-triangular structure is detected through the
/// strongly connected components of the sparsity graph, so a large
/// symmetric plant coupled one-way into a small predictor is cheap.
[[nodiscard]] std::vector<std::complex<double>> eigenvalues(const Mat& A);

/// max Re(λ) over the spectrum; -inf for an empty matrix.
[[nodiscard]] double spectral_abscissa(const Mat& A);

/// Largest singular value.
[[nodiscard]] double sigma_max(const Mat& M);
[[nodiscard]] double sigma_max(const CMat& M);

/// Orthonormal basis of range(M) (numerical rank by relative tolerance).
[[nodiscard]] Mat range_basis(const Mat& M, double rel_tol = 1e-10);

/// Solve min ‖M x − b‖² + λ‖x‖² through an augmented QR factorization.
[[nodiscard]] Mat ridge_solve(const Mat& M, const Mat& b, double lambda);

[[nodiscard]] SpMat to_sparse(const Mat& M, double drop = 0.0);

}  // namespace rh
