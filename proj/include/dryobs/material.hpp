#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/grid.hpp"

namespace dryobs {

/// Box of (moisture, temperature) values a material model accepts.
struct AdmissibleRange {
  double x_min = -0.05;
  double x_max = 1.2;
  double T_min = 250.0;
  double T_max = 450.0;

  bool contains(double x, double T) const {
    return x >= x_min && x <= x_max && T >= T_min && T <= T_max;
  }
};

/// Constitutive laws of the drying particle.
///
/// Tensors are diagonal and returned in the material frame
/// (fiber, first transverse, second transverse); `to_grid_axes` maps them
/// onto the grid axes given the grid's fiber axis.
///
/// Boundary laws follow the Neumann form n.(delta grad x) = J_x and
/// n.(lambda grad T) = J_T + dh_v * rho_d * J_Tv, so a negative J_x removes
/// water from the particle.
class MaterialModel {
 public:
  virtual ~MaterialModel() = default;

  virtual std::string id() const = 0;

  /// delta(T) in m^2/s.
  virtual Eigen::Vector3d moisture_diffusivity(double T) const = 0;
  /// lambda(x) in W/(m K).
  virtual Eigen::Vector3d heat_conductivity(double x) const = 0;
  /// s(x) in J/(m^3 K).
  virtual double heat_capacity(double x) const = 0;

  /// J_x in (kg/kg) m/s.
  virtual double moisture_flux(double x, double T, double rho_inf) const = 0;
  /// J_T in W/m^2.
  virtual double heat_flux(double x, double T, double T_inf) const = 0;
  /// J_Tv in (kg/kg) m/s; enters the heat balance scaled by dh_v * rho_d.
  virtual double evaporation_flux(double x, double T, double rho_inf) const = 0;

  virtual double latent_heat() const = 0;
  virtual double dry_density() const = 0;

  /// Uniform moisture at which all boundary fluxes vanish for (T_inf, rho_inf).
  virtual double equilibrium_moisture(double T_inf, double rho_inf) const = 0;

  virtual AdmissibleRange admissible_range() const { return {}; }

  /// Total boundary heat flux density entering the heat balance.
  double boundary_heat(double x, double T, double T_inf, double rho_inf) const {
    return heat_flux(x, T, T_inf) + latent_heat() * dry_density() * evaporation_flux(x, T, rho_inf);
  }

  /// Bulk evaluation on grid axes. delta and lambda are axis-major
  /// (entry a * count + i); cap has one entry per cell.
  virtual void cell_properties(const double* x, const double* T, int count, Axis fiber,
                               double* delta, double* lambda, double* cap) const;

  struct SurfaceFluxes {
    double moisture;
    double heat;
  };

  /// J_x and boundary_heat together; models may override to share work.
  virtual SurfaceFluxes surface_fluxes(double x, double T, double T_inf, double rho_inf) const {
    return {moisture_flux(x, T, rho_inf), boundary_heat(x, T, T_inf, rho_inf)};
  }
};

/// Maps a material-frame diagonal tensor onto grid axes.
inline Eigen::Vector3d to_grid_axes(const Eigen::Vector3d& material, Axis fiber) {
  Eigen::Vector3d out;
  const int f = static_cast<int>(fiber);
  out[f] = material[0];
  int slot = 1;
  for (int a = 0; a < 3; ++a) {
    if (a != f) out[a] = material[slot++];
  }
  return out;
}

inline void MaterialModel::cell_properties(const double* x, const double* T, int count, Axis fiber,
                                           double* delta, double* lambda, double* cap) const {
  for (int i = 0; i < count; ++i) {
    const Eigen::Vector3d d = to_grid_axes(moisture_diffusivity(T[i]), fiber);
    const Eigen::Vector3d l = to_grid_axes(heat_conductivity(x[i]), fiber);
    for (int a = 0; a < 3; ++a) {
      delta[a * count + i] = d[a];
      lambda[a * count + i] = l[a];
    }
    cap[i] = heat_capacity(x[i]);
  }
}

/// Saturation vapour density of water (kg/m^3), Magnus-Tetens fit.
inline double saturation_vapor_density(double T) {
  constexpr double molar_mass = 0.018015;
  constexpr double gas_constant = 8.314462618;
  const double p_sat = 610.78 * std::exp(17.27 * (T - 273.15) / (T - 35.85));
  return p_sat * molar_mass / (gas_constant * T);
}

/// Parameters of the default "calibration wood".
struct CalibrationWoodParams {
  // delta(T) = delta0 * exp(-E_delta / T) * diag(a_fiber, a_perp, a_perp)
  double delta0 = 4.4e-7;
  double E_delta = 1000.0;
  double a_fiber = 2.5;
  double a_perp = 1.0;
  // lambda(x) = (lambda0 + lambda1 * x) * diag(b_fiber, b_perp, b_perp)
  double lambda0 = 0.12;
  double lambda1 = 0.20;
  double b_fiber = 2.0;
  double b_perp = 1.0;
  // s(x) = rho_d * (c_dry + x * c_water)
  double rho_d = 450.0;
  double c_dry = 1500.0;
  double c_water = 4186.0;
  // Surface transfer: J_x = -k_m (rho_eq - rho_inf) / rho_d, J_T = alpha (T_inf - T)
  double k_m = 0.3;
  double alpha = 150.0;
  double dh_v = 2.26e6;
  // Sorption isotherm: relative humidity = 1 - exp(-(x / x_s)^2) for x >= 0
  double x_s = 0.4;
};

/// Smooth anisotropic wood model used when no measured properties are available.
class CalibrationWood final : public MaterialModel {
 public:
  explicit CalibrationWood(CalibrationWoodParams p = {}) : p_(p) {
    if (!(p_.delta0 > 0 && p_.a_fiber > 0 && p_.a_perp > 0 && p_.lambda0 > 0 &&
          p_.b_fiber > 0 && p_.b_perp > 0 && p_.rho_d > 0 && p_.c_dry > 0 && p_.x_s > 0 &&
          p_.k_m >= 0 && p_.alpha >= 0 && p_.dh_v >= 0)) {
      throw InvalidArgument("calibration-wood parameters must be positive");
    }
    if (p_.lambda0 + p_.lambda1 * range_.x_min <= 0 ||
        p_.c_dry + p_.c_water * range_.x_min <= 0) {
      throw InvalidArgument("calibration-wood parameters give non-positive lambda or s");
    }
  }

  std::string id() const override { return "calibration-wood-v1"; }
  const CalibrationWoodParams& params() const { return p_; }

  Eigen::Vector3d moisture_diffusivity(double T) const override {
    const double d = p_.delta0 * std::exp(-p_.E_delta / T);
    return {d * p_.a_fiber, d * p_.a_perp, d * p_.a_perp};
  }

  Eigen::Vector3d heat_conductivity(double x) const override {
    const double l = p_.lambda0 + p_.lambda1 * x;
    return {l * p_.b_fiber, l * p_.b_perp, l * p_.b_perp};
  }

  double heat_capacity(double x) const override { return p_.rho_d * (p_.c_dry + x * p_.c_water); }

  double relative_humidity(double x) const {
    const double r = std::max(x, 0.0) / p_.x_s;
    return 1.0 - std::exp(-r * r);
  }

  double moisture_flux(double x, double T, double rho_inf) const override {
    const double rho_eq = relative_humidity(x) * saturation_vapor_density(T);
    return -p_.k_m * (rho_eq - rho_inf) / p_.rho_d;
  }

  double heat_flux(double, double T, double T_inf) const override { return p_.alpha * (T_inf - T); }

  double evaporation_flux(double x, double T, double rho_inf) const override {
    return moisture_flux(x, T, rho_inf);
  }

  void cell_properties(const double* x, const double* T, int count, Axis fiber, double* delta,
                       double* lambda, double* cap) const override {
    const Eigen::Vector3d da = to_grid_axes({p_.a_fiber, p_.a_perp, p_.a_perp}, fiber);
    const Eigen::Vector3d lb = to_grid_axes({p_.b_fiber, p_.b_perp, p_.b_perp}, fiber);
    for (int i = 0; i < count; ++i) {
      const double d = p_.delta0 * std::exp(-p_.E_delta / T[i]);
      const double l = p_.lambda0 + p_.lambda1 * x[i];
      for (int a = 0; a < 3; ++a) {
        delta[a * count + i] = d * da[a];
        lambda[a * count + i] = l * lb[a];
      }
      cap[i] = p_.rho_d * (p_.c_dry + x[i] * p_.c_water);
    }
  }

  SurfaceFluxes surface_fluxes(double x, double T, double T_inf, double rho_inf) const override {
    const double jx = moisture_flux(x, T, rho_inf);
    return {jx, p_.alpha * (T_inf - T) + p_.dh_v * p_.rho_d * jx};
  }

  double latent_heat() const override { return p_.dh_v; }
  double dry_density() const override { return p_.rho_d; }

  double equilibrium_moisture(double T_inf, double rho_inf) const override {
    const double phi = rho_inf / saturation_vapor_density(T_inf);
    if (!(phi >= 0.0 && phi < 1.0)) {
      throw InvalidArgument("ambient humidity at or above saturation has no sorption equilibrium");
    }
    return p_.x_s * std::sqrt(-std::log1p(-phi));
  }

  AdmissibleRange admissible_range() const override { return range_; }

 private:
  CalibrationWoodParams p_;
  AdmissibleRange range_{};
};

/// Ambient temperature and vapour density as functions of time.
class AmbientConditions {
 public:
  enum class Interpolation { Constant, Linear };

  struct Point {
    double t;
    double T_inf;
    double rho_inf;
  };

  struct Value {
    double T_inf;
    double rho_inf;
  };

  AmbientConditions() : AmbientConditions(constant(298.15, 0.0)) {}

  AmbientConditions(std::vector<Point> points, Interpolation mode)
      : points_(std::move(points)), mode_(mode) {
    if (points_.empty()) throw InvalidArgument("ambient schedule needs at least one point");
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (!(points_[k].T_inf > 0.0)) throw InvalidArgument("ambient temperature must be > 0 K");
      if (!(points_[k].rho_inf >= 0.0)) throw InvalidArgument("ambient vapour density must be >= 0");
      if (k > 0 && !(points_[k].t > points_[k - 1].t)) {
        throw InvalidArgument("ambient schedule times must be strictly increasing");
      }
    }
  }

  static AmbientConditions constant(double T_inf, double rho_inf) {
    return AmbientConditions({{0.0, T_inf, rho_inf}}, Interpolation::Constant);
  }

  /// Values are held constant outside the schedule's time range.
  Value at(double t) const {
    if (points_.size() == 1 || t <= points_.front().t) {
      return {points_.front().T_inf, points_.front().rho_inf};
    }
    if (t >= points_.back().t) return {points_.back().T_inf, points_.back().rho_inf};
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const Point& p) { return v < p.t; });
    const Point& hi = *it;
    const Point& lo = *(it - 1);
    if (mode_ == Interpolation::Constant) return {lo.T_inf, lo.rho_inf};
    const double w = (t - lo.t) / (hi.t - lo.t);
    return {lo.T_inf + w * (hi.T_inf - lo.T_inf), lo.rho_inf + w * (hi.rho_inf - lo.rho_inf)};
  }

  const std::vector<Point>& points() const { return points_; }
  Interpolation interpolation() const { return mode_; }

 private:
  std::vector<Point> points_;
  Interpolation mode_ = Interpolation::Constant;
};

}  // namespace dryobs
