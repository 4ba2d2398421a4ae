#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "evotune/errors.hpp"

namespace evotune {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// exp(-gamma * |x - y|^2)
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar rbf_kernel(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                     typename DerivedX::Scalar gamma) {
  if (x.size() != y.size()) throw InvalidInput("rbf_kernel: dimension mismatch");
  if (!(gamma > 0)) throw InvalidInput("rbf_kernel: gamma must be positive");
  return std::exp(-gamma * (x.derived().reshaped() - y.derived().reshaped()).squaredNorm());
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> rbf_kernel_matrix(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b,
                                                     typename DerivedA::Scalar gamma) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.cols()) throw InvalidInput("rbf_kernel: dimension mismatch");
  const VectorX<Scalar> na = a.rowwise().squaredNorm();
  const VectorX<Scalar> nb = b.rowwise().squaredNorm();
  MatrixX<Scalar> d2 = (-2 * a * b.transpose()).eval();
  d2.colwise() += na;
  d2.rowwise() += nb.transpose();
  return (-gamma * d2.cwiseMax(Scalar(0))).array().exp().matrix();
}

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;   // descending
  MatrixX<Scalar> vectors;  // column i pairs with values(i)
};

/// Full eigendecomposition of a symmetric matrix, eigenvalues in descending
/// order. Each eigenvector is signed so its largest-magnitude entry is positive.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> symmetric_eig(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw InvalidInput("symmetric_eig: matrix is not square");
  const Scalar scale = std::max<Scalar>(Scalar(1), m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9) * scale) {
    throw InvalidInput("symmetric_eig: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(m.derived());
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric_eig: no convergence");

  const Eigen::Index n = m.rows();
  SymmetricEigen<Scalar> out{VectorX<Scalar>(n), MatrixX<Scalar>(n, n)};
  // solver sorts ascending
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = n - 1 - i;
    out.values(i) = solver.eigenvalues()(src);
    VectorX<Scalar> v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.vectors.col(i) = v;
  }
  return out;
}

template <typename Scalar>
struct KpcaModel {
  MatrixX<Scalar> train_rows;  // n x d
  Scalar gamma = 0;
  VectorX<Scalar> eigenvalues;  // all n, descending, clamped at 0
  MatrixX<Scalar> alphas;       // n x n_components, |alpha_i| = 1 / sqrt(lambda_i)
  VectorX<Scalar> k_row_means;
  Scalar k_grand_mean = 0;
  Eigen::Index n_components = 0;
  Scalar variance_target = Scalar(0.95);

  Eigen::Index input_dim() const { return train_rows.cols(); }

  /// Share of the positive-eigenvalue mass carried by each eigenvalue.
  VectorX<Scalar> explained_variance_ratio() const {
    const Scalar total = eigenvalues.sum();
    return total > 0 ? VectorX<Scalar>(eigenvalues / total) : VectorX<Scalar>::Zero(eigenvalues.size());
  }
};

/// Double-centres a kernel matrix: K - 1K/n - K1/n + 1K1/n^2.
template <typename Derived>
MatrixX<typename Derived::Scalar> center_kernel(const Eigen::MatrixBase<Derived>& k) {
  using Scalar = typename Derived::Scalar;
  const RowVectorX<Scalar> col_means = k.colwise().mean();
  const VectorX<Scalar> row_means = k.rowwise().mean();
  const Scalar grand = k.mean();
  MatrixX<Scalar> out = k;
  out.rowwise() -= col_means;
  out.colwise() -= row_means;
  out.array() += grand;
  return out;
}

/// Projects rows of `x` onto the fitted components.
template <typename Scalar, typename Derived>
MatrixX<Scalar> transform(const KpcaModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != model.input_dim()) throw InvalidInput("kpca transform: dimension mismatch");
  MatrixX<Scalar> k = rbf_kernel_matrix(x, model.train_rows, model.gamma);
  const VectorX<Scalar> query_means = k.rowwise().mean();
  k.rowwise() -= model.k_row_means.transpose();
  k.colwise() -= query_means;
  k.array() += model.k_grand_mean;
  return k * model.alphas;
}

/// Fits RBF kernel PCA and keeps the fewest leading components whose share of
/// the positive eigenvalue mass reaches `variance_target`. Eigenvalues below
/// 1e-10 of the largest count as zero.
template <typename Derived>
KpcaModel<typename Derived::Scalar> fit_kpca(const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar gamma,
                                             typename Derived::Scalar variance_target = 0.95) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 2) throw InvalidInput("fit_kpca: need at least 2 rows");
  if (!x.allFinite()) throw InvalidInput("fit_kpca: non-finite input");
  if (!(gamma > 0)) throw InvalidInput("fit_kpca: gamma must be positive");
  if (!(variance_target > 0 && variance_target <= 1)) throw InvalidInput("fit_kpca: variance target must be in (0, 1]");

  KpcaModel<Scalar> model;
  model.train_rows = x;
  model.gamma = gamma;
  model.variance_target = variance_target;

  const MatrixX<Scalar> k = rbf_kernel_matrix(x, x, gamma);
  model.k_row_means = k.rowwise().mean();
  model.k_grand_mean = k.mean();
  MatrixX<Scalar> centered = center_kernel(k);
  // restore exact symmetry lost to rounding
  centered = ((centered + centered.transpose()) / 2).eval();

  auto eig = symmetric_eig(centered);
  const Scalar largest = eig.values.size() ? eig.values(0) : Scalar(0);
  if (!(largest > Scalar(1e-10))) throw NumericalError("fit_kpca: no variance to explain");
  const Scalar cutoff = Scalar(1e-10) * largest;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) < cutoff) eig.values(i) = 0;
  }
  model.eigenvalues = eig.values;

  const Scalar total = eig.values.sum();
  Scalar running = 0;
  Eigen::Index m = 0;
  while (m < eig.values.size() && eig.values(m) > 0) {
    running += eig.values(m);
    ++m;
    if (running / total >= variance_target - Scalar(1e-12)) break;
  }
  model.n_components = m;
  model.alphas.resize(x.rows(), m);
  for (Eigen::Index i = 0; i < m; ++i) model.alphas.col(i) = eig.vectors.col(i) / std::sqrt(eig.values(i));
  return model;
}

}  // namespace evotune
