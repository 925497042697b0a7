#include <cmath>

#include <gtest/gtest.h>

#include "desk.hpp"
#include "dryobs/gramian.hpp"
#include "dryobs/oracles.hpp"

namespace dryobs {
namespace {

using testing::DeskProblem;

TEST(PerturbationScheme, EnumeratesMagnitudeThenSignThenCoordinate) {
  PerturbationScheme s;
  s.magnitudes = {1.0};
  const auto ics = gramian_initial_conditions(s, Eigen::VectorXd::Zero(2));
  ASSERT_EQ(ics.size(), 4u);
  EXPECT_EQ(ics[0], Eigen::Vector2d(-1.0, 0.0));
  EXPECT_EQ(ics[1], Eigen::Vector2d(0.0, -1.0));
  EXPECT_EQ(ics[2], Eigen::Vector2d(1.0, 0.0));
  EXPECT_EQ(ics[3], Eigen::Vector2d(0.0, 1.0));
  s.magnitudes = {2.0};
  EXPECT_EQ(gramian_initial_conditions(s, Eigen::VectorXd::Zero(3))[0], Eigen::Vector3d(-2.0, 0.0, 0.0));
}

TEST(PerturbationScheme, DefaultSchemeGivesSixtyStatesForOrderTen) {
  EXPECT_EQ(gramian_initial_conditions(PerturbationScheme{}, Eigen::VectorXd::Zero(10)).size(), 60u);
}

TEST(PerturbationScheme, RejectsRepeatedOrNonPositiveMagnitudes) {
  PerturbationScheme s;
  s.magnitudes = {1e-6, 1e-6};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.magnitudes = {0.0};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.magnitudes = {};
  EXPECT_THROW(s.validate(), InvalidArgument);
}

// x' = a x, y = x: dt * sum_j exp(2 a t_j) has a geometric closed form.
TEST(EmpiricalGramian, ScalarDecayMatchesGeometricSum) {
  const double a = -1.0;
  SamplingOptions so;
  so.dt = 0.01;
  so.m_f = 5000;
  auto f = [&](double, const Eigen::Ref<const Eigen::MatrixXd>& Z) { return Eigen::MatrixXd(a * Z); };
  const std::vector<Eigen::MatrixXd> D{-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
  const Eigen::MatrixXd G =
      empirical_gramian_full(f, Eigen::RowVectorXd::Ones(1), Eigen::VectorXd::Zero(1), D, {1e-3, 1e-2}, so);
  EXPECT_NEAR(G(0, 0), so.dt / (1.0 - std::exp(2.0 * a * so.dt)), 1e-9);
}

TEST(EmpiricalGramian, LinearRodMatchesLyapunovForEachMagnitude) {
  const int N = 10;
  const auto rod = oracle::LinearRod::make(N);
  SamplingOptions so;
  so.m_f = 20000;
  const Eigen::MatrixXd G_ref = rod.gramian_sampled(so.dt);
  auto f = [&](double, const Eigen::Ref<const Eigen::MatrixXd>& Z) { return Eigen::MatrixXd(rod.A * Z); };
  const std::vector<Eigen::MatrixXd> D{-Eigen::MatrixXd::Identity(N, N), Eigen::MatrixXd::Identity(N, N)};
  std::vector<Eigen::MatrixXd> Gs;
  for (double h : {1e-7, 1e-6, 1e-5}) {
    Gs.push_back(empirical_gramian_full(f, rod.C, Eigen::VectorXd::Zero(N), D, {h}, so));
    EXPECT_LT(oracle::relative_frobenius(Gs.back(), G_ref), 1e-6) << "h = " << h;
  }
  // For a linear system the scaling cancels: every magnitude gives the same Gramian.
  EXPECT_LT(oracle::relative_frobenius(Gs[0], Gs[2]), 1e-8);
}

TEST(EmpiricalGramian, ReducedGramianOfCompleteLinearBasisLiftsToFullGramian) {
  const int N = 8;
  const auto rod = oracle::LinearRod::make(N);
  SamplingOptions so;
  so.m_f = 20000;
  const double dV = rod.cell_volume;
  const Eigen::MatrixXd U = oracle::random_orthogonal(N, 3);
  const Eigen::MatrixXd Phi = U / std::sqrt(dV);
  const Eigen::MatrixXd Ar = U.transpose() * rod.A * U;
  auto f = [&](double, const Eigen::Ref<const Eigen::MatrixXd>& C) { return Eigen::MatrixXd(Ar * C); };
  const std::vector<Eigen::MatrixXd> D{-Eigen::MatrixXd::Identity(N, N), Eigen::MatrixXd::Identity(N, N)};
  const Eigen::MatrixXd W = empirical_gramian_full(f, rod.C * Phi, Eigen::VectorXd::Zero(N), D, {1e-6}, so);
  EXPECT_LT(oracle::relative_frobenius(dV * dV * Phi * W * Phi.transpose(), rod.gramian_sampled(so.dt)), 1e-6);
}

TEST(EmpiricalGramian, UnsettledResponseIsReported) {
  SamplingOptions so;
  so.dt = 0.01;
  so.m_f = 100;  // horizon 1 s for a 10 s time constant
  auto f = [](double, const Eigen::Ref<const Eigen::MatrixXd>& Z) { return Eigen::MatrixXd(-0.1 * Z); };
  const std::vector<Eigen::MatrixXd> D{-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
  EXPECT_THROW(empirical_gramian_full(f, Eigen::RowVectorXd::Ones(1), Eigen::VectorXd::Zero(1), D, {1e-3}, so),
               SteadyStateError);
}

TEST(EmpiricalGramian, RefusesOversizedFullOrderProblems) {
  const int M = kFullOrderLimit + 1;
  auto f = [](double, const Eigen::Ref<const Eigen::MatrixXd>& Z) { return Eigen::MatrixXd(-Z); };
  EXPECT_THROW(empirical_gramian_full(f, Eigen::RowVectorXd::Ones(M), Eigen::VectorXd::Zero(M),
                                      {Eigen::MatrixXd::Identity(M, M)}, {1.0}, SamplingOptions{}),
               InvalidArgument);
}

TEST(PerturbationMatrix, IsOrthonormalWithNullTrailingDirections) {
  const DeskProblem desk;
  const CombinedBasis b = desk.basis(5, 4);
  const int M = b.state_size(), n = b.order();
  for (int l = 1; l <= 2; ++l) {
    const Eigen::MatrixXd D = build_perturbation_matrix(b, l);
    EXPECT_LT((D.transpose() * D - Eigen::MatrixXd::Identity(M, M)).cwiseAbs().maxCoeff(), 1e-10);
    // Trailing directions do not move the ROM coefficients.
    EXPECT_LT(b.weighted_transpose(D.rightCols(M - n)).cwiseAbs().maxCoeff(), 1e-10 * std::sqrt(b.cell_volume()));
    // Leading directions move exactly one coefficient by sqrt(dV).
    const Eigen::MatrixXd lead = b.weighted_transpose(D.leftCols(n)) / std::sqrt(b.cell_volume());
    EXPECT_LT((lead - PerturbationScheme::sign(l) * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LiftedGramian, SharesNonzeroEigenpairsWithTheReducedGramian) {
  const DeskProblem desk;
  const CombinedBasis b = desk.basis(4, 3);
  GramianResult r;
  r.cell_volume = b.cell_volume();
  const Eigen::MatrixXd Q = oracle::random_orthogonal(7, 9);
  r.W = Q * Eigen::VectorXd::LinSpaced(7, 7.0, 1.0).asDiagonal() * Q.transpose() / r.cell_volume;
  analyse_gramian(r);
  const GramianEigs e = gramian_eigs(r, b);
  const LiftedGramian L = lift_gramian(r, b);
  const Eigen::MatrixXd G = L.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::VectorXd lam = es.eigenvalues().reverse();
  for (int k = 0; k < 7; ++k) {
    EXPECT_NEAR(lam[k], e.eigenvalues[k], 1e-10 * e.eigenvalues[k]);
    const Eigen::VectorXd v = es.eigenvectors().col(G.rows() - 1 - k);
    EXPECT_GT(std::abs(v.dot(e.lifted_vectors.col(k))), 1.0 - 1e-10);
  }
  EXPECT_LT(lam.tail(G.rows() - 7).cwiseAbs().maxCoeff(), 1e-12 * lam[0]);
  EXPECT_NEAR(L.trace(), G.trace(), 1e-12 * G.trace());
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(G.rows(), -1.0, 1.0);
  EXPECT_LT((L.apply(v) - G * v).norm(), 1e-12 * (G * v).norm());
  EXPECT_NEAR(observability_measure(r), r.eigenvalues.sum(), 1e-12 * r.kappa);
}

TEST(LiftedGramian, RefusesDensificationAboveLimit) {
  const DeskProblem desk;
  const CombinedBasis b = desk.basis(2, 2);
  GramianResult r;
  r.cell_volume = b.cell_volume();
  r.W = Eigen::MatrixXd::Identity(4, 4);
  analyse_gramian(r);
  EXPECT_THROW(lift_gramian(r, b, 10).dense(), InvalidArgument);
}

class DeskGramian : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    desk_ = new DeskProblem();
    ops_ = new RomOperators(assemble(desk_->basis(3, 3), desk_->grid, desk_->material,
                                     AmbientConditions::constant(298.15, 0.005)));
    const double x_eq = desk_->material->equilibrium_moisture(298.15, 0.005);
    c_ss_ = new Eigen::VectorXd(
        rom_steady_state(project(uniform_state(desk_->grid, x_eq, 298.15), ops_->basis), *ops_).c);
    so_.m_f = 400'000;
  }
  static void TearDownTestSuite() {
    delete c_ss_;
    delete ops_;
    delete desk_;
  }
  static DeskProblem* desk_;
  static RomOperators* ops_;
  static Eigen::VectorXd* c_ss_;
  static SamplingOptions so_;
};
DeskProblem* DeskGramian::desk_ = nullptr;
RomOperators* DeskGramian::ops_ = nullptr;
Eigen::VectorXd* DeskGramian::c_ss_ = nullptr;
SamplingOptions DeskGramian::so_;

TEST_F(DeskGramian, ReducedGramianIsSymmetricPositiveDefinite) {
  const SurfaceMask mask(desk_->grid, {0, 1, 4});
  const GramianResult r = reduced_gramian(*ops_, mask, PerturbationScheme{}, *c_ss_, so_);
  EXPECT_LT((r.W - r.W.transpose()).cwiseAbs().maxCoeff(), 1e-14 * r.W.cwiseAbs().maxCoeff());
  EXPECT_GT(r.min_eigenvalue(), 0.0);
  EXPECT_NEAR(r.kappa, r.kappa_from_eigenvalues(), 1e-10 * r.kappa);
  for (Eigen::Index k = 1; k < r.eigenvalues.size(); ++k) EXPECT_LE(r.eigenvalues[k], r.eigenvalues[k - 1]);
}

TEST_F(DeskGramian, SweepAgreesWithSingleCellGramians) {
  const std::vector<int> cells{0, 5, desk_->grid.index(3, 2, 1)};
  const PositionSweepResult sw = position_sweep(*ops_, PerturbationScheme{}, *c_ss_, so_, cells);
  ASSERT_EQ(sw.entries.size(), cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const GramianResult r = reduced_gramian(*ops_, single_cell_mask(desk_->grid, cells[k]), PerturbationScheme{},
                                            *c_ss_, so_);
    EXPECT_NEAR(sw.entries[k].kappa, r.kappa, 1e-8 * r.kappa) << "cell " << cells[k];
  }
  EXPECT_GE(sw.entries[static_cast<std::size_t>(sw.ranking[0])].kappa,
            sw.entries[static_cast<std::size_t>(sw.ranking[2])].kappa);
}

TEST_F(DeskGramian, SweepRejectsInteriorCells) {
  EXPECT_THROW(position_sweep(*ops_, PerturbationScheme{}, *c_ss_, so_, {-1}), InvalidArgument);
}

}  // namespace
}  // namespace dryobs
