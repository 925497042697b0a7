#pragma once

// Reference computations that share no code path with the production
// solvers. They are dense and only meant for small problems.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"

namespace dryobs::oracle {

/// Solves A^T G + G A + Q = 0 through the Kronecker form
/// (I (x) A^T + A^T (x) I) vec(G) = -vec(Q).
inline Eigen::MatrixXd lyapunov_continuous(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) throw DimensionError("lyapunov: size mismatch");
  if (n > 40) throw InvalidArgument("lyapunov: dense Kronecker solve limited to n <= 40");
  const Eigen::Index m = n * n;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
  // vec index of G(i, j) is i + n j.
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = i + n * j;
      for (Eigen::Index k = 0; k < n; ++k) {
        K(row, k + n * j) += A(k, i);  // (A^T G)(i, j) = sum_k A(k, i) G(k, j)
        K(row, i + n * k) += A(k, j);  // (G A)(i, j)   = sum_k G(i, k) A(k, j)
      }
    }
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), m);
  const Eigen::VectorXd g = K.partialPivLu().solve(rhs);
  Eigen::MatrixXd G = Eigen::Map<const Eigen::MatrixXd>(g.data(), n, n);
  return 0.5 * (G + G.transpose());
}

/// Solves G = F^T G F + Q (the sampled counterpart) through the Kronecker form.
inline Eigen::MatrixXd lyapunov_discrete(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || Q.rows() != n || Q.cols() != n) throw DimensionError("stein: size mismatch");
  if (n > 40) throw InvalidArgument("stein: dense Kronecker solve limited to n <= 40");
  const Eigen::Index m = n * n;
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(m, m);
  // (F^T G F)(i, j) = sum_{k,l} F(k, i) G(k, l) F(l, j)
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index l = 0; l < n; ++l)
        for (Eigen::Index k = 0; k < n; ++k) K(i + n * j, k + n * l) -= F(k, i) * F(l, j);
  const Eigen::VectorXd g = K.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(Q.data(), m));
  Eigen::MatrixXd G = Eigen::Map<const Eigen::MatrixXd>(g.data(), n, n);
  return 0.5 * (G + G.transpose());
}

/// exp(A t) for symmetric A by eigendecomposition.
inline Eigen::MatrixXd expm_symmetric(const Eigen::MatrixXd& A, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const Eigen::VectorXd e = (es.eigenvalues() * t).array().exp();
  return es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose();
}

/// Dirichlet heat rod: A = k * tridiag(1, -2, 1), read out at one end cell.
struct LinearRod {
  Eigen::MatrixXd A;
  Eigen::RowVectorXd C;
  double cell_volume = 1e-3;

  static LinearRod make(int N, double k = 10.0, double cell_volume = 1e-3) {
    LinearRod r;
    r.A = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
      r.A(i, i) = -2.0 * k;
      if (i > 0) r.A(i, i - 1) = k;
      if (i + 1 < N) r.A(i, i + 1) = k;
    }
    r.C = Eigen::RowVectorXd::Zero(N);
    r.C[0] = 1.0;
    r.cell_volume = cell_volume;
    return r;
  }

  /// Observability Gramian of the continuous system.
  Eigen::MatrixXd gramian_continuous() const { return lyapunov_continuous(A, C.transpose() * C); }

  /// dt * sum_{j >= 0} e^{A^T t_j} C^T C e^{A t_j}, the infinite sampled sum.
  Eigen::MatrixXd gramian_sampled(double dt) const {
    return lyapunov_discrete(expm_symmetric(A, dt), dt * C.transpose() * C);
  }
};

/// Random orthogonal matrix (QR of a Gaussian matrix with sign fix).
inline Eigen::MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd G(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) G(i, j) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

inline double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  const double d = ref.norm();
  return d > 0 ? (a - ref).norm() / d : (a - ref).norm();
}

}  // namespace dryobs::oracle
