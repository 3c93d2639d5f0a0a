#include "rh/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rh {

bool is_symmetric(const Mat& A, double rel_tol) {
  if (A.rows() != A.cols()) return false;
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
  return (A - A.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

namespace {

// Tarjan's SCC on the pattern of A, iterative to survive large n.
std::vector<std::vector<int>> strongly_connected_components(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && A(i, j) != 0.0) adj[i].push_back(j);

  std::vector<int> index(n, -1), low(n, 0), stack;
  std::vector<char> on_stack(n, 0);
  std::vector<std::vector<int>> comps;
  int counter = 0;
  std::vector<std::pair<int, size_t>> call;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.emplace_back(root, 0);
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos == 0) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = 1;
      }
      if (pos < adj[v].size()) {
        const int w = adj[v][pos++];
        if (index[w] < 0) {
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::vector<int> comp;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
      const int done = v;
      call.pop_back();
      if (!call.empty()) {
        const int parent = call.back().first;
        low[parent] = std::min(low[parent], low[done]);
      }
    }
  }
  return comps;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Mat& A) {
  std::vector<std::complex<double>> out;
  if (A.rows() == 0) return out;
  for (const auto& comp : strongly_connected_components(A)) {
    const auto m = static_cast<Eigen::Index>(comp.size());
    Mat block(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) block(i, j) = A(comp[i], comp[j]);
    if (m == 1) {
      out.emplace_back(block(0, 0), 0.0);
    } else if (is_symmetric(block)) {
      Eigen::SelfAdjointEigenSolver<Mat> es(block, Eigen::EigenvaluesOnly);
      for (Eigen::Index i = 0; i < m; ++i) out.emplace_back(es.eigenvalues()(i), 0.0);
    } else {
      Eigen::EigenSolver<Mat> es(block, false);
      for (Eigen::Index i = 0; i < m; ++i) out.push_back(es.eigenvalues()(i));
    }
  }
  return out;
}

double spectral_abscissa(const Mat& A) {
  double a = -std::numeric_limits<double>::infinity();
  for (const auto& l : eigenvalues(A)) a = std::max(a, l.real());
  return a;
}

double sigma_max(const Mat& M) {
  if (M.size() == 0) return 0.0;
  if (M.cols() == 1) return M.norm();
  if (M.rows() == 1) return M.norm();
  Eigen::BDCSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

double sigma_max(const CMat& M) {
  if (M.size() == 0) return 0.0;
  if (M.cols() == 1 || M.rows() == 1) return M.norm();
  Eigen::BDCSVD<CMat> svd(M);
  return svd.singularValues()(0);
}

Mat range_basis(const Mat& M, double rel_tol) {
  if (M.size() == 0) return Mat(M.rows(), 0);
  Eigen::BDCSVD<Mat> svd(M, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  return svd.matrixU().leftCols(r);
}

Mat ridge_solve(const Mat& M, const Mat& b, double lambda) {
  if (lambda <= 0.0) return M.completeOrthogonalDecomposition().solve(b);
  const Eigen::Index n = M.cols();
  Mat aug(M.rows() + n, n);
  aug << M, std::sqrt(lambda) * Mat::Identity(n, n);
  Mat rhs = Mat::Zero(M.rows() + n, b.cols());
  rhs.topRows(M.rows()) = b;
  return aug.householderQr().solve(rhs);
}

SpMat to_sparse(const Mat& M, double drop) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      if (std::abs(M(i, j)) > drop) t.emplace_back(i, j, M(i, j));
  SpMat S(M.rows(), M.cols());
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

}  // namespace rh
