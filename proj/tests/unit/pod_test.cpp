#include <random>

#include <gtest/gtest.h>

#include "desk.hpp"
#include "dryobs/oracles.hpp"
#include "dryobs/pod.hpp"

namespace dryobs {
namespace {

// Snapshots built from known orthonormal modes and singular values.
SnapshotSet synthetic_snapshots(const Eigen::VectorXd& sigma, int N, int m, double dV, Eigen::MatrixXd* modes) {
  const Eigen::MatrixXd U = oracle::random_orthogonal(N, 21).leftCols(sigma.size());
  // Right singular vectors orthogonal to the ones vector keep the mean exact.
  Eigen::MatrixXd R = oracle::random_orthogonal(m, 22);
  Eigen::MatrixXd V(m, sigma.size());
  {
    Eigen::MatrixXd B(m, sigma.size() + 1);
    B.col(0).setOnes();
    B.rightCols(sigma.size()) = R.leftCols(sigma.size());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, sigma.size() + 1);
    V = Q.rightCols(sigma.size());
  }
  SnapshotSet s;
  s.cell_volume = dV;
  s.matrix = (U * sigma.asDiagonal() * V.transpose()).colwise() + Eigen::VectorXd::Constant(N, 2.0);
  for (int j = 0; j < m; ++j) s.times.push_back(j);
  *modes = U;
  return s;
}

TEST(Pod, RecoversKnownSingularValuesAndModes) {
  Eigen::VectorXd sigma(4);
  sigma << 5.0, 2.0, 0.5, 0.1;
  Eigen::MatrixXd U;
  const double dV = 1e-9;
  const SnapshotSet s = synthetic_snapshots(sigma, 20, 12, dV, &U);
  const PodBasis b = compute_pod(s);
  ASSERT_EQ(b.rank(), 4);
  EXPECT_LT((b.singular_values - sigma).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((b.mean - Eigen::VectorXd::Constant(20, 2.0)).cwiseAbs().maxCoeff(), 1e-12);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(std::abs((std::sqrt(dV) * b.all_modes.col(k)).dot(U.col(k))), 1.0, 1e-12);
  }
}

TEST(Pod, ModesAreOrthonormalInTheWeightedInnerProduct) {
  const testing::DeskProblem desk;
  for (const PodBasis* b : {&desk.pod_x, &desk.pod_T}) {
    const Eigen::MatrixXd G = b->cell_volume * b->all_modes.transpose() * b->all_modes;
    EXPECT_LT((G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff(), 1e-10);
    for (int k = 1; k < b->rank(); ++k) EXPECT_LE(b->singular_values[k], b->singular_values[k - 1]);
  }
}

TEST(Pod, EnergyCriterionSelectsSmallestSufficientOrder) {
  PodBasis b;
  b.singular_values = (Eigen::VectorXd(4) << 6.0, 3.0, 0.9, 0.1).finished();
  EXPECT_DOUBLE_EQ(energy(b, 1), 0.6);
  EXPECT_DOUBLE_EQ(energy(b, 4), 1.0);
  EXPECT_EQ(choose_cutoff(b, 0.6), 1);
  EXPECT_EQ(choose_cutoff(b, 0.95), 3);
  EXPECT_EQ(choose_cutoff(b, 1.0), 4);
  EXPECT_THROW(choose_cutoff(b, 0.0), InvalidArgument);
  EXPECT_THROW(energy(b, 5), InvalidArgument);
}

TEST(Pod, ProjectionOfASnapshotReconstructsItWithTheFullBasis) {
  const testing::DeskProblem desk;
  const SnapshotSet s = desk.field(FieldId::Temperature);
  const PodBasis& b = desk.pod_T;
  for (Eigen::Index j = 0; j < s.matrix.cols(); j += 7) {
    const Eigen::VectorXd f = s.matrix.col(j);
    EXPECT_LT((reconstruct(project(f, b), b) - f).cwiseAbs().maxCoeff(), 1e-9 * f.cwiseAbs().maxCoeff());
  }
}

TEST(Pod, CombinedBasisIsBlockDiagonal) {
  const testing::DeskProblem desk;
  const CombinedBasis cb = desk.basis(3, 2);
  EXPECT_EQ(cb.order(), 5);
  const Eigen::MatrixXd Phi = cb.phi();
  const int N = cb.cell_count();
  EXPECT_EQ(Phi.topRightCorner(N, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(Phi.bottomLeftCorner(N, 3).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::MatrixXd G = cb.cell_volume() * Phi.transpose() * Phi;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(5, -1e-4, 1e-4);
  EXPECT_LT((project(reconstruct(c, cb), cb) - c).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(Pod, IdenticalSnapshotsAreDegenerate) {
  SnapshotSet s;
  s.cell_volume = 1.0;
  s.matrix = Eigen::MatrixXd::Ones(5, 3);
  s.times = {0.0, 1.0, 2.0};
  EXPECT_THROW(compute_pod(s), DegenerateSnapshotError);
}

TEST(Pod, MalformedSnapshotSetsAreRejected) {
  SnapshotSet s;
  s.cell_volume = 1.0;
  s.matrix = Eigen::MatrixXd::Random(5, 3);
  s.times = {0.0, 2.0, 1.0};
  EXPECT_THROW(compute_pod(s), InvalidArgument);
  s.times = {0.0, 1.0};
  EXPECT_THROW(compute_pod(s), DimensionError);
}

}  // namespace
}  // namespace dryobs
