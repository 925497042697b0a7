#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dryobs/fvm.hpp"

namespace dryobs {
namespace {

// Two cells along the fiber axis; every other face is exposed.
TEST(FvmRhs, TwoCellFluxesMatchHandComputation) {
  const double h = 2e-3;
  const Grid g = build_grid(2, 1, 1, h);
  CalibrationWoodParams p;
  const CalibrationWood w(p);
  const double T_inf = 353.15, rho_inf = 0.005;
  const auto amb = AmbientConditions::constant(T_inf, rho_inf);
  StateVector z(4);
  z << 0.7, 0.5, 300.0, 310.0;

  auto delta = [&](double T) { return p.delta0 * std::exp(-p.E_delta / T) * p.a_fiber; };
  auto lam = [&](double x) { return (p.lambda0 + p.lambda1 * x) * p.b_fiber; };
  auto jx = [&](double x, double T) {
    const double rh = 1.0 - std::exp(-(x / p.x_s) * (x / p.x_s));
    return -p.k_m * (rh * saturation_vapor_density(T) - rho_inf) / p.rho_d;
  };
  auto jT = [&](double x, double T) { return p.alpha * (T_inf - T) + p.dh_v * p.rho_d * jx(x, T); };
  auto s = [&](double x) { return p.rho_d * (p.c_dry + x * p.c_water); };

  const double qx = 0.5 * (delta(300.0) + delta(310.0)) * (0.5 - 0.7) / (h * h);
  const double qT = 0.5 * (lam(0.7) + lam(0.5)) * (310.0 - 300.0) / (h * h);
  const StateVector f = rhs(z, g, w, amb, 0.0);
  EXPECT_NEAR(f[0], qx + 5.0 * jx(0.7, 300.0) / h, 1e-12 * std::abs(f[0]));
  EXPECT_NEAR(f[1], -qx + 5.0 * jx(0.5, 310.0) / h, 1e-12 * std::abs(f[1]));
  EXPECT_NEAR(f[2], (qT + 5.0 * jT(0.7, 300.0) / h) / s(0.7), 1e-12 * std::abs(f[2]));
  EXPECT_NEAR(f[3], (-qT + 5.0 * jT(0.5, 310.0) / h) / s(0.5), 1e-12 * std::abs(f[3]));
}

TEST(FvmRhs, UniformEquilibriumIsStationary) {
  const Grid g = build_grid(3, 4, 2, 1e-3);
  const CalibrationWood w;
  const auto amb = AmbientConditions::constant(320.0, 0.005);
  const StateVector z = uniform_state(g, w.equilibrium_moisture(320.0, 0.005), 320.0);
  EXPECT_LT(rhs(z, g, w, amb, 0.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FvmRhs, StateOutsideAdmissibleRangeIsReported) {
  const Grid g = build_grid(2, 2, 2, 1e-3);
  const CalibrationWood w;
  StateVector z = uniform_state(g, 0.5, 300.0);
  z[3] = 5.0;
  EXPECT_THROW(rhs(z, g, w, AmbientConditions::constant(300.0, 0.0), 0.0), DomainError);
}

TEST(FvmIntegrate, InsulatedParticleConservesMoisture) {
  CalibrationWoodParams p;
  p.k_m = 0.0;
  p.alpha = 0.0;
  const CalibrationWood w(p);
  const Grid g = build_grid(5, 3, 2, 1e-3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StateVector z0(2 * g.cell_count());
  for (int i = 0; i < g.cell_count(); ++i) {
    z0[i] = 0.3 + 0.5 * u(rng);
    z0[g.cell_count() + i] = 290.0 + 40.0 * u(rng);
  }
  const auto tr = integrate(z0, g, w, AmbientConditions::constant(353.15, 0.005), {0.0, 30.0},
                            max_stable_dt(g, w), 5);
  const double X0 = total_moisture(z0, g);
  for (const auto& z : tr.states) EXPECT_NEAR(total_moisture(z, g), X0, 1e-10 * X0);
  // Diffusion flattens the field.
  const int n = g.cell_count();
  EXPECT_LT(tr.states.back().head(n).maxCoeff() - tr.states.back().head(n).minCoeff(),
            z0.head(n).maxCoeff() - z0.head(n).minCoeff());
}

TEST(FvmIntegrate, MirrorSymmetricStartStaysSymmetric) {
  const Grid g = build_grid(6, 4, 3, 1e-3);
  const CalibrationWood w;
  const auto tr = integrate(uniform_state(g, 0.8, 298.15), g, w, AmbientConditions::constant(353.15, 0.005),
                            {0.0, 50.0}, max_stable_dt(g, w), 1000);
  const StateVector& z = tr.states.back();
  const int n = g.cell_count();
  double asym = 0.0;
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const int a = g.index(i, j, k), b = g.index(g.nx() - 1 - i, g.ny() - 1 - j, g.nz() - 1 - k);
        asym = std::max({asym, std::abs(z[a] - z[b]), std::abs(z[n + a] - z[n + b]) / 300.0});
      }
  EXPECT_LT(asym, 1e-12);
}

// Insulated rod at uniform temperature: moisture diffusion with a constant
// coefficient, whose discrete cosine modes decay at known rates.
TEST(FvmIntegrate, CosineModeDecaysAtTheDiscreteEigenvalue) {
  CalibrationWoodParams p;
  p.k_m = 0.0;
  p.alpha = 0.0;
  const CalibrationWood w(p);
  const int N = 12;
  const double h = 1e-3, T = 330.0;
  const Grid g = build_grid(N, 1, 1, h);
  const double delta = w.moisture_diffusivity(T)[0];
  const int mode = 2;
  StateVector z0(2 * N);
  Eigen::VectorXd shape(N);
  for (int i = 0; i < N; ++i) shape[i] = std::cos(std::numbers::pi * mode * (i + 0.5) / N);
  z0.head(N) = Eigen::VectorXd::Constant(N, 0.5) + 0.1 * shape;
  z0.tail(N).setConstant(T);
  const double lambda = -4.0 * delta / (h * h) * std::pow(std::sin(std::numbers::pi * mode / (2.0 * N)), 2);
  const double t_end = 0.5 / -lambda;
  const auto tr = integrate(z0, g, w, AmbientConditions::constant(T, 0.005), {0.0, t_end}, 0.01, 1000000);
  const Eigen::VectorXd dev = tr.states.back().head(N) - Eigen::VectorXd::Constant(N, 0.5);
  const double amp = dev.dot(shape) / shape.squaredNorm();
  EXPECT_NEAR(amp, 0.1 * std::exp(lambda * t_end), 1e-8);
  EXPECT_LT((dev - amp * shape).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FvmIntegrate, ZeroHorizonRecordsOnlyTheInitialState) {
  const Grid g = build_grid(2, 2, 2, 1e-3);
  const CalibrationWood w;
  const auto tr = integrate(uniform_state(g, 0.8, 298.15), g, w, AmbientConditions::constant(353.15, 0.005),
                            {0.0, 0.0}, 0.1);
  EXPECT_EQ(tr.size(), 1u);
}

TEST(FvmIntegrate, RecordsRequestedCadenceAndFinalState) {
  const Grid g = build_grid(2, 2, 2, 1e-3);
  const CalibrationWood w;
  const auto tr = integrate(uniform_state(g, 0.8, 298.15), g, w, AmbientConditions::constant(353.15, 0.005),
                            {0.0, 10.0}, 0.1, 10);
  ASSERT_EQ(tr.size(), 11u);
  EXPECT_DOUBLE_EQ(tr.times.back(), 10.0);
  EXPECT_NEAR(tr.times[3], 3.0, 1e-12);
}

TEST(FvmIntegrate, UnstableStepIsRejectedWithTheBound) {
  const Grid g = build_grid(4, 4, 4, 1e-3);
  const CalibrationWood w;
  const double dt_max = max_stable_dt(g, w);
  try {
    integrate(uniform_state(g, 0.8, 298.15), g, w, AmbientConditions::constant(353.15, 0.005), {0.0, 10.0},
              2.0 * dt_max);
    FAIL() << "expected ConfigurationError";
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("maximal admissible dt"), std::string::npos);
  }
}

TEST(FvmIntegrate, DryingLowersTotalMoistureMonotonically) {
  const Grid g = build_grid(4, 4, 2, 1e-3);
  const CalibrationWood w;
  const auto tr = integrate(uniform_state(g, 0.8, 298.15), g, w, AmbientConditions::constant(353.15, 0.005),
                            {0.0, 200.0}, max_stable_dt(g, w), 20);
  for (std::size_t k = 1; k < tr.size(); ++k) {
    EXPECT_LT(total_moisture(tr.states[k], g), total_moisture(tr.states[k - 1], g));
  }
}

TEST(FvmSteadyState, ConvergesToSorptionEquilibrium) {
  const Grid g = build_grid(3, 3, 2, 1e-3);
  const CalibrationWood w;
  const auto amb = AmbientConditions::constant(330.0, 0.005);
  const auto ss = find_steady_state(uniform_state(g, 0.3, 300.0), g, w, amb, 1e-10, 1e5, max_stable_dt(g, w));
  const int n = g.cell_count();
  EXPECT_NEAR(ss.state.head(n).mean(), w.equilibrium_moisture(330.0, 0.005), 1e-8);
  EXPECT_NEAR(ss.state.tail(n).mean(), 330.0, 1e-6);
}

TEST(FvmOutput, MaskAveragesSurfaceTemperatures) {
  const Grid g = build_grid(3, 3, 3, 1e-3);
  StateVector z = uniform_state(g, 0.5, 300.0);
  z[g.cell_count() + g.index(0, 0, 0)] = 310.0;
  const SurfaceMask m(g, {g.index(0, 0, 0), g.index(0, 1, 0)});
  EXPECT_DOUBLE_EQ(measure_output(z, g, m), 305.0);
}

}  // namespace
}  // namespace dryobs
