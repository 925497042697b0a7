#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/grid.hpp"
#include "dryobs/mask.hpp"
#include "dryobs/material.hpp"

namespace dryobs {

/// Stacked cell moistures (first N entries) and temperatures (last N): z = [x; T].
using StateVector = Eigen::VectorXd;

inline auto moisture(const StateVector& z) { return z.head(z.size() / 2); }
inline auto temperature(const StateVector& z) { return z.tail(z.size() / 2); }
inline auto moisture(StateVector& z) { return z.head(z.size() / 2); }
inline auto temperature(StateVector& z) { return z.tail(z.size() / 2); }

inline StateVector uniform_state(const Grid& g, double x, double T) {
  StateVector z(2 * g.cell_count());
  z.head(g.cell_count()).setConstant(x);
  z.tail(g.cell_count()).setConstant(T);
  return z;
}

/// Sequence of recorded states.
struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  /// Cells clamped from round-off undershoot below zero moisture.
  long clamped_moisture = 0;

  std::size_t size() const { return times.size(); }
};

namespace detail {

inline void check_state_size(const StateVector& z, const Grid& g) {
  if (z.size() != 2 * g.cell_count()) {
    throw DimensionError("state has " + std::to_string(z.size()) + " entries, grid needs " +
                         std::to_string(2 * g.cell_count()));
  }
}

inline void check_admissible(double x, double T, const AdmissibleRange& r, int cell) {
  if (!(std::isfinite(x) && std::isfinite(T) && r.contains(x, T))) {
    std::ostringstream os;
    os << "state outside admissible range at cell " << cell << " (x=" << x << ", T=" << T << ")";
    throw DomainError(os.str(), cell);
  }
}

}  // namespace detail

/// Right-hand side f(z) of the semi-discrete model.
///
/// Interior faces use two-point fluxes with arithmetic-mean face coefficients;
/// boundary faces contribute J/cell_size with J from the Neumann laws evaluated
/// at the boundary cell. The heat balance is divided by s(x) cellwise.
inline StateVector rhs(const StateVector& z, const Grid& g, const MaterialModel& mat,
                       const AmbientConditions& amb, double t) {
  detail::check_state_size(z, g);
  const int n = g.cell_count();
  const double h = g.cell_size();
  const AdmissibleRange range = mat.admissible_range();
  const Axis fiber = g.fiber_axis();

  std::vector<Eigen::Vector3d> delta(n), lambda(n);
  Eigen::VectorXd cap(n);
  for (int i = 0; i < n; ++i) {
    detail::check_admissible(z[i], z[n + i], range, i);
    delta[i] = to_grid_axes(mat.moisture_diffusivity(z[n + i]), fiber);
    lambda[i] = to_grid_axes(mat.heat_conductivity(z[i]), fiber);
    cap[i] = mat.heat_capacity(z[i]);
  }

  StateVector out = StateVector::Zero(2 * n);
  const double inv_h2 = 1.0 / (h * h);
  for (const auto& f : g.interior_faces()) {
    const int ax = static_cast<int>(f.axis);
    const double df = 0.5 * (delta[f.a][ax] + delta[f.b][ax]);
    const double lf = 0.5 * (lambda[f.a][ax] + lambda[f.b][ax]);
    const double qx = df * (z[f.b] - z[f.a]) * inv_h2;
    const double qT = lf * (z[n + f.b] - z[n + f.a]) * inv_h2;
    out[f.a] += qx;
    out[f.b] -= qx;
    out[n + f.a] += qT;
    out[n + f.b] -= qT;
  }

  const auto a = amb.at(t);
  for (const auto& sc : g.surface_cells()) {
    const double x = z[sc.cell], T = z[n + sc.cell];
    const auto j = mat.surface_fluxes(x, T, a.T_inf, a.rho_inf);
    const double faces = static_cast<double>(sc.normals.size());
    out[sc.cell] += faces * j.moisture / h;
    out[n + sc.cell] += faces * j.heat / h;
  }
  for (int i = 0; i < n; ++i) out[n + i] /= cap[i];
  return out;
}

/// Largest explicit step allowed by the diffusive bounds over the admissible range.
inline double max_stable_dt(const Grid& g, const MaterialModel& mat, double safety = 0.9) {
  const AdmissibleRange r = mat.admissible_range();
  constexpr int samples = 97;
  double max_lambda = 0.0, min_cap = std::numeric_limits<double>::infinity(), max_delta = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double w = static_cast<double>(k) / (samples - 1);
    const double x = r.x_min + w * (r.x_max - r.x_min);
    const double T = r.T_min + w * (r.T_max - r.T_min);
    max_lambda = std::max(max_lambda, mat.heat_conductivity(x).sum());
    min_cap = std::min(min_cap, mat.heat_capacity(x));
    max_delta = std::max(max_delta, mat.moisture_diffusivity(T).sum());
  }
  const double h2 = g.cell_size() * g.cell_size();
  const double dt_heat = safety * h2 * min_cap / (2.0 * max_lambda);
  const double dt_moist = max_delta > 0 ? safety * h2 / (2.0 * max_delta)
                                        : std::numeric_limits<double>::infinity();
  return std::min(dt_heat, dt_moist);
}

struct IntegrateOptions {
  double safety = 0.9;
  /// Negative moisture above -clamp_tolerance is round-off and reset to zero.
  double clamp_tolerance = 1e-9;
};

namespace detail {

inline void guard_state(StateVector& z, int n, double t, double clamp_tol, long& clamped) {
  for (int i = 0; i < 2 * n; ++i) {
    if (!std::isfinite(z[i])) {
      std::ostringstream os;
      os << "non-finite state at t=" << t << " s (entry " << i << ")";
      throw DivergenceError(os.str(), t);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (z[i] < 0.0) {
      if (z[i] >= -clamp_tol) {
        z[i] = 0.0;
        ++clamped;
      } else {
        std::ostringstream os;
        os << "negative moisture " << z[i] << " at cell " << i << ", t=" << t << " s";
        throw DivergenceError(os.str(), t);
      }
    }
  }
}

inline StateVector rk4_step(const StateVector& z, double t, double h, const Grid& g,
                            const MaterialModel& mat, const AmbientConditions& amb) {
  const StateVector k1 = rhs(z, g, mat, amb, t);
  const StateVector k2 = rhs(z + 0.5 * h * k1, g, mat, amb, t + 0.5 * h);
  const StateVector k3 = rhs(z + 0.5 * h * k2, g, mat, amb, t + 0.5 * h);
  const StateVector k4 = rhs(z + h * k3, g, mat, amb, t + h);
  return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Fixed-step RK4 over t_span. The span is split into equal steps no longer than dt;
/// a state is recorded every `record_every` steps plus the final state.
inline Trajectory integrate(const StateVector& z0, const Grid& g, const MaterialModel& mat,
                            const AmbientConditions& amb, std::pair<double, double> t_span,
                            double dt, int record_every = 1, IntegrateOptions opt = {}) {
  detail::check_state_size(z0, g);
  const auto [t0, t1] = t_span;
  if (!(dt > 0.0)) throw InvalidArgument("time step must be > 0");
  if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
  if (t1 < t0) throw InvalidArgument("time span must be increasing");
  const double dt_max = max_stable_dt(g, mat, opt.safety);
  if (dt > dt_max) {
    std::ostringstream os;
    os << "time step " << dt << " s violates the diffusive stability bound; maximal admissible dt is "
       << dt_max << " s";
    throw ConfigurationError(os.str());
  }

  const int n = g.cell_count();
  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(z0);
  if (t1 == t0) return traj;

  const long steps = static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9));
  const double h = (t1 - t0) / static_cast<double>(steps);
  StateVector z = z0;
  for (long s = 1; s <= steps; ++s) {
    const double t = t0 + static_cast<double>(s - 1) * h;
    z = detail::rk4_step(z, t, h, g, mat, amb);
    const double t_new = (s == steps) ? t1 : t0 + static_cast<double>(s) * h;
    detail::guard_state(z, n, t_new, opt.clamp_tolerance, traj.clamped_moisture);
    if (s % record_every == 0 || s == steps) {
      traj.times.push_back(t_new);
      traj.states.push_back(z);
    }
  }
  return traj;
}

/// Volume-averaged moisture (1/V) sum x_i dV.
inline double total_moisture(const StateVector& z, const Grid& g) {
  detail::check_state_size(z, g);
  return z.head(g.cell_count()).mean();
}

/// Mean temperature over the mask cells.
inline double measure_output(const StateVector& z, const Grid& g, const SurfaceMask& mask) {
  detail::check_state_size(z, g);
  if (mask.size() == 0) throw InvalidArgument("invalid mask: no cells");
  const int n = g.cell_count();
  double sum = 0.0;
  for (int c : mask.cells()) {
    if (!g.is_surface(c)) {
      throw InvalidArgument("invalid mask: cell " + std::to_string(c) + " is not a surface cell");
    }
    sum += z[n + c];
  }
  return sum / mask.size();
}

struct SteadyState {
  StateVector state;
  double reach_time = 0.0;  ///< time after t0 at which the residual dropped below tol
  double residual = 0.0;    ///< max-norm of the right-hand side at `state`
};

/// Integrates until ||f(z)||_inf < tol.
inline SteadyState find_steady_state(const StateVector& z0, const Grid& g, const MaterialModel& mat,
                                     const AmbientConditions& amb, double tol, double t_max,
                                     double dt, double t0 = 0.0, IntegrateOptions opt = {}) {
  detail::check_state_size(z0, g);
  if (!(tol > 0.0)) throw InvalidArgument("steady-state tolerance must be > 0");
  if (!(dt > 0.0)) throw InvalidArgument("time step must be > 0");
  const double dt_max = max_stable_dt(g, mat, opt.safety);
  if (dt > dt_max) {
    std::ostringstream os;
    os << "time step " << dt << " s violates the diffusive stability bound; maximal admissible dt is "
       << dt_max << " s";
    throw ConfigurationError(os.str());
  }
  const int n = g.cell_count();
  StateVector z = z0;
  long clamped = 0;
  double t = t0;
  StateVector best = z;
  double best_res = std::numeric_limits<double>::infinity();
  while (true) {
    const StateVector k1 = rhs(z, g, mat, amb, t);
    const double res = k1.lpNorm<Eigen::Infinity>();
    if (res < best_res) {
      best_res = res;
      best = z;
    }
    if (res < tol) return {z, t - t0, res};
    if (t - t0 >= t_max) {
      std::ostringstream os;
      os << "no steady state within " << t_max << " s (residual " << best_res << " > " << tol << ")";
      throw NonConvergenceError(os.str(), best, best_res);
    }
    const StateVector k2 = rhs(z + 0.5 * dt * k1, g, mat, amb, t + 0.5 * dt);
    const StateVector k3 = rhs(z + 0.5 * dt * k2, g, mat, amb, t + 0.5 * dt);
    const StateVector k4 = rhs(z + dt * k3, g, mat, amb, t + dt);
    z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += dt;
    detail::guard_state(z, n, t, opt.clamp_tolerance, clamped);
  }
}

}  // namespace dryobs
