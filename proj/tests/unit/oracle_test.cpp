#include <cmath>

#include <gtest/gtest.h>

#include "dryobs/oracles.hpp"

namespace dryobs::oracle {
namespace {

TEST(Oracle, ScalarContinuousLyapunov) {
  // 2 a g + q = 0
  const Eigen::MatrixXd G = lyapunov_continuous(Eigen::MatrixXd::Constant(1, 1, -0.5), Eigen::MatrixXd::Ones(1, 1));
  EXPECT_NEAR(G(0, 0), 1.0, 1e-14);
}

TEST(Oracle, ScalarDiscreteLyapunov) {
  // g = f^2 g + q
  const Eigen::MatrixXd G = lyapunov_discrete(Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Ones(1, 1));
  EXPECT_NEAR(G(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Oracle, DiagonalSystemsSolveEntrywise) {
  const Eigen::Vector3d a(-1.0, -2.0, -4.0);
  const Eigen::MatrixXd Q = Eigen::Vector3d(1.0, 2.0, 3.0) * Eigen::RowVector3d(1.0, 2.0, 3.0);
  const Eigen::MatrixXd G = lyapunov_continuous(a.asDiagonal().toDenseMatrix(), Q);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(G(i, j), -Q(i, j) / (a[i] + a[j]), 1e-13);
}

TEST(Oracle, RodSolutionsSatisfyTheirEquations) {
  const LinearRod rod = LinearRod::make(6);
  const Eigen::MatrixXd Q = rod.C.transpose() * rod.C;
  const Eigen::MatrixXd Gc = rod.gramian_continuous();
  EXPECT_LT((rod.A.transpose() * Gc + Gc * rod.A + Q).norm(), 1e-12 * Gc.norm());
  const double dt = 0.01;
  const Eigen::MatrixXd F = expm_symmetric(rod.A, dt);
  const Eigen::MatrixXd Gs = rod.gramian_sampled(dt);
  EXPECT_LT((F.transpose() * Gs * F + dt * Q - Gs).norm(), 1e-12 * Gs.norm());
  // The sampled sum is a right Riemann-type sum of the integral: it approaches
  // the continuous Gramian as dt shrinks.
  EXPECT_LT(relative_frobenius(rod.gramian_sampled(1e-4), Gc), 2e-3);
}

TEST(Oracle, ExpmOfDiagonal) {
  const Eigen::MatrixXd E = expm_symmetric(Eigen::Vector2d(-1.0, 2.0).asDiagonal().toDenseMatrix(), 0.5);
  EXPECT_NEAR(E(0, 0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(E(1, 1), std::exp(1.0), 1e-14);
  EXPECT_NEAR(E(0, 1), 0.0, 1e-15);
}

TEST(Oracle, RandomOrthogonalIsOrthogonalAndSeeded) {
  const Eigen::MatrixXd Q = random_orthogonal(7, 42);
  EXPECT_LT((Q.transpose() * Q - Eigen::MatrixXd::Identity(7, 7)).norm(), 1e-13);
  EXPECT_EQ(Q, random_orthogonal(7, 42));
  EXPECT_NE(Q, random_orthogonal(7, 43));
}

TEST(Oracle, RefusesLargeProblems) {
  EXPECT_THROW(lyapunov_continuous(Eigen::MatrixXd::Identity(41, 41), Eigen::MatrixXd::Identity(41, 41)),
               InvalidArgument);
}

}  // namespace
}  // namespace dryobs::oracle
