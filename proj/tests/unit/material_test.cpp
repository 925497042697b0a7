#include <cmath>

#include <gtest/gtest.h>

#include "dryobs/material.hpp"

namespace dryobs {
namespace {

TEST(CalibrationWood, FiberDirectionDiffusesFaster) {
  const CalibrationWood w;
  const Eigen::Vector3d d = w.moisture_diffusivity(320.0);
  EXPECT_GT(d[0], d[1]);
  EXPECT_DOUBLE_EQ(d[1], d[2]);
  const Eigen::Vector3d along_y = to_grid_axes(d, Axis::Y);
  EXPECT_DOUBLE_EQ(along_y[1], d[0]);
  EXPECT_DOUBLE_EQ(along_y[0], d[1]);
}

TEST(CalibrationWood, LawsMatchTheirClosedForms) {
  CalibrationWoodParams p;
  const CalibrationWood w(p);
  const double T = 330.0, x = 0.35;
  EXPECT_NEAR(w.moisture_diffusivity(T)[0], p.delta0 * std::exp(-p.E_delta / T) * p.a_fiber, 1e-24);
  EXPECT_NEAR(w.heat_conductivity(x)[1], (p.lambda0 + p.lambda1 * x) * p.b_perp, 1e-15);
  EXPECT_NEAR(w.heat_capacity(x), p.rho_d * (p.c_dry + x * p.c_water), 1e-9);
  EXPECT_NEAR(w.heat_flux(x, T, 350.0), p.alpha * 20.0, 1e-12);
}

TEST(CalibrationWood, EquilibriumMoistureZeroesTheSurfaceFlux) {
  const CalibrationWood w;
  for (double T : {298.15, 330.0, 353.15}) {
    const double x_eq = w.equilibrium_moisture(T, 0.005);
    EXPECT_GT(x_eq, 0.0);
    EXPECT_NEAR(w.moisture_flux(x_eq, T, 0.005), 0.0, 1e-15);
    EXPECT_NEAR(w.boundary_heat(x_eq, T, T, 0.005), 0.0, 1e-9);
  }
}

TEST(CalibrationWood, WetWoodLosesWaterInDryAir) {
  const CalibrationWood w;
  EXPECT_LT(w.moisture_flux(0.8, 353.15, 0.005), 0.0);
  EXPECT_GT(w.moisture_flux(0.0, 298.15, 0.01), 0.0);
}

TEST(CalibrationWood, SaturatedAmbientHasNoEquilibrium) {
  const CalibrationWood w;
  EXPECT_THROW(w.equilibrium_moisture(298.15, 10.0 * saturation_vapor_density(298.15)), InvalidArgument);
}

TEST(CalibrationWood, BulkPropertiesAgreeWithPointwiseLaws) {
  const CalibrationWood w;
  const double x[3] = {0.1, 0.5, 0.9}, T[3] = {290.0, 320.0, 350.0};
  double delta[9], lambda[9], cap[3];
  w.cell_properties(x, T, 3, Axis::Z, delta, lambda, cap);
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d d = to_grid_axes(w.moisture_diffusivity(T[i]), Axis::Z);
    const Eigen::Vector3d l = to_grid_axes(w.heat_conductivity(x[i]), Axis::Z);
    for (int a = 0; a < 3; ++a) {
      EXPECT_DOUBLE_EQ(delta[a * 3 + i], d[a]);
      EXPECT_DOUBLE_EQ(lambda[a * 3 + i], l[a]);
    }
    EXPECT_DOUBLE_EQ(cap[i], w.heat_capacity(x[i]));
    const auto j = w.surface_fluxes(x[i], T[i], 353.15, 0.005);
    EXPECT_DOUBLE_EQ(j.moisture, w.moisture_flux(x[i], T[i], 0.005));
    EXPECT_NEAR(j.heat, w.boundary_heat(x[i], T[i], 353.15, 0.005), 1e-9 * std::abs(j.heat));
  }
}

TEST(CalibrationWood, RejectsNonPhysicalParameters) {
  CalibrationWoodParams p;
  p.delta0 = -1.0;
  EXPECT_THROW(CalibrationWood{p}, InvalidArgument);
}

TEST(Ambient, LinearScheduleInterpolatesAndClamps) {
  const AmbientConditions a({{0.0, 300.0, 0.0}, {10.0, 320.0, 0.01}}, AmbientConditions::Interpolation::Linear);
  EXPECT_DOUBLE_EQ(a.at(5.0).T_inf, 310.0);
  EXPECT_DOUBLE_EQ(a.at(5.0).rho_inf, 0.005);
  EXPECT_DOUBLE_EQ(a.at(-1.0).T_inf, 300.0);
  EXPECT_DOUBLE_EQ(a.at(99.0).T_inf, 320.0);
  const AmbientConditions c({{0.0, 300.0, 0.0}, {10.0, 320.0, 0.01}}, AmbientConditions::Interpolation::Constant);
  EXPECT_DOUBLE_EQ(c.at(9.9).T_inf, 300.0);
}

TEST(Ambient, RejectsUnorderedSchedule) {
  EXPECT_THROW(AmbientConditions({{1.0, 300.0, 0.0}, {1.0, 310.0, 0.0}}, AmbientConditions::Interpolation::Linear),
               InvalidArgument);
}

}  // namespace
}  // namespace dryobs
