#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/fvm.hpp"
#include "dryobs/grid.hpp"
#include "dryobs/mask.hpp"
#include "dryobs/material.hpp"
#include "dryobs/ode.hpp"
#include "dryobs/pod.hpp"

namespace dryobs {

/// State-independent parts of the Galerkin model.
///
/// Moisture rows use the weak form: a volume sum over interior faces of the
/// face flux times the precomputed mode gradient, plus boundary traces of the
/// modes times J_x. Temperature rows are weighted by 1/s(x) of the
/// reconstructed state, so their face gradients depend on the state; they are
/// evaluated by summation by parts (cell balance scaled by 1/s, then projected),
/// which is algebraically the same sum.
struct RomOperators {
  CombinedBasis basis;
  Grid grid;
  std::shared_ptr<const MaterialModel> material;
  AmbientConditions ambient;

  /// Interior-face gradients of the moisture modes (faces x n_x), 1/m.
  Eigen::MatrixXd mode_gradients_x;
  /// Moisture-mode traces on surface cells times the exposed area (surface cells x n_x).
  Eigen::MatrixXd surface_quadrature_x;

  int order() const { return basis.order(); }
};

inline RomOperators assemble(const CombinedBasis& basis, const Grid& grid,
                             std::shared_ptr<const MaterialModel> mat, AmbientConditions amb) {
  if (!mat) throw InvalidArgument("material model is null");
  if (basis.cell_count() != grid.cell_count()) {
    throw DimensionError("basis has " + std::to_string(basis.cell_count()) + " cells, grid has " +
                         std::to_string(grid.cell_count()));
  }
  if (std::abs(basis.cell_volume() - grid.cell_volume()) > 1e-12 * grid.cell_volume()) {
    throw DimensionError("basis cell volume does not match grid");
  }
  RomOperators ops{basis, grid, std::move(mat), std::move(amb), {}, {}};
  const auto& faces = grid.interior_faces();
  const double inv_h = 1.0 / grid.cell_size();
  const Eigen::Index F = static_cast<Eigen::Index>(faces.size());
  ops.mode_gradients_x.resize(F, basis.n_x());
  for (Eigen::Index f = 0; f < F; ++f) {
    const auto& fc = faces[f];
    ops.mode_gradients_x.row(f) = (basis.modes_x().row(fc.b) - basis.modes_x().row(fc.a)) * inv_h;
  }
  const auto& surf = grid.surface_cells();
  ops.surface_quadrature_x.resize(static_cast<Eigen::Index>(surf.size()), basis.n_x());
  for (std::size_t k = 0; k < surf.size(); ++k) {
    const double area = grid.face_area() * static_cast<double>(surf[k].normals.size());
    ops.surface_quadrature_x.row(static_cast<Eigen::Index>(k)) = area * basis.modes_x().row(surf[k].cell);
  }
  return ops;
}

/// Galerkin right-hand side for a block of coefficient columns (n x B).
inline Eigen::MatrixXd rom_rhs_many(const Eigen::MatrixXd& C, const RomOperators& ops, double t) {
  const CombinedBasis& b = ops.basis;
  if (C.rows() != b.order()) throw DimensionError("coefficient block has wrong row count");
  const int n = b.order();
  const Eigen::Index B = C.cols();
  if (n == 0) return Eigen::MatrixXd(0, B);
  const Grid& g = ops.grid;
  const MaterialModel& mat = *ops.material;
  const int N = g.cell_count();
  const double h = g.cell_size();
  const double dV = g.cell_volume();
  const Axis fiber = g.fiber_axis();
  const AdmissibleRange range = mat.admissible_range();
  const auto& faces = g.interior_faces();
  const auto& surf = g.surface_cells();
  const Eigen::Index F = static_cast<Eigen::Index>(faces.size());
  const Eigen::Index NB = static_cast<Eigen::Index>(surf.size());
  const auto amb = ops.ambient.at(t);

  const Eigen::MatrixXd Z = b.reconstruct_many(C);

  Eigen::MatrixXd flux_x(F, B), jx(NB, B), heat(N, B);
  std::vector<double> delta(3 * N), lambda(3 * N), cap(N);
  for (Eigen::Index col = 0; col < B; ++col) {
    const double* x = Z.col(col).data();
    const double* T = x + N;
    for (int i = 0; i < N; ++i) {
      if (!(std::isfinite(x[i]) && std::isfinite(T[i]) && range.contains(x[i], T[i]))) {
        std::ostringstream os;
        os << "reconstructed state outside admissible range at cell " << i << " (x=" << x[i]
           << ", T=" << T[i] << ")";
        throw DomainError(os.str(), i);
      }
    }
    mat.cell_properties(x, T, N, fiber, delta.data(), lambda.data(), cap.data());
    double* hc = heat.col(col).data();
    std::fill(hc, hc + N, 0.0);
    for (Eigen::Index f = 0; f < F; ++f) {
      const auto& fc = faces[f];
      const int off = static_cast<int>(fc.axis) * N;
      flux_x(f, col) = 0.5 * (delta[off + fc.a] + delta[off + fc.b]) * (x[fc.b] - x[fc.a]) / h;
      const double qT = 0.5 * (lambda[off + fc.a] + lambda[off + fc.b]) * (T[fc.b] - T[fc.a]) / h;
      hc[fc.a] += qT / h;
      hc[fc.b] -= qT / h;
    }
    for (Eigen::Index k = 0; k < NB; ++k) {
      const int c = surf[k].cell;
      const auto j = mat.surface_fluxes(x[c], T[c], amb.T_inf, amb.rho_inf);
      jx(k, col) = j.moisture;
      hc[c] += static_cast<double>(surf[k].normals.size()) * j.heat / h;
    }
    for (int i = 0; i < N; ++i) hc[i] /= cap[i];
  }

  Eigen::MatrixXd out(n, B);
  out.topRows(b.n_x()).noalias() = -dV * (ops.mode_gradients_x.transpose() * flux_x);
  out.topRows(b.n_x()).noalias() += ops.surface_quadrature_x.transpose() * jx;
  out.bottomRows(b.n_T()).noalias() = dV * (b.modes_T().transpose() * heat);
  return out;
}

inline Eigen::VectorXd rom_rhs(const Eigen::VectorXd& c, const RomOperators& ops, double t = 0.0) {
  return rom_rhs_many(c, ops, t);
}

/// rom_rhs(c) and its central finite-difference Jacobian from one batched
/// evaluation; steps are rel_step * max(|c_i|, 1).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> rom_rhs_and_jacobian(const Eigen::VectorXd& c,
                                                                        const RomOperators& ops, double t,
                                                                        double rel_step = 1e-5) {
  const int n = ops.order();
  if (c.size() != n) throw DimensionError("coefficient vector has wrong length");
  Eigen::MatrixXd C = c.replicate(1, 2 * n + 1);
  Eigen::VectorXd steps(n);
  for (int i = 0; i < n; ++i) {
    steps[i] = rel_step * std::max(std::abs(c[i]), 1.0);
    C(i, 2 * i + 1) += steps[i];
    C(i, 2 * i + 2) -= steps[i];
  }
  const Eigen::MatrixXd R = rom_rhs_many(C, ops, t);
  Eigen::MatrixXd J(n, n);
  for (int i = 0; i < n; ++i) J.col(i) = (R.col(2 * i + 1) - R.col(2 * i + 2)) / (2.0 * steps[i]);
  return {R.col(0), J};
}

inline Eigen::MatrixXd rom_jacobian(const Eigen::VectorXd& c, const RomOperators& ops, double t,
                                    double rel_step = 1e-5) {
  return rom_rhs_and_jacobian(c, ops, t, rel_step).second;
}

/// Affine output w = H c + offset of a temperature-averaging mask.
struct OutputMap {
  Eigen::RowVectorXd H;
  double offset = 0.0;

  double operator()(const Eigen::VectorXd& c) const { return H.dot(c) + offset; }
};

inline OutputMap rom_output_map(const RomOperators& ops, const SurfaceMask& mask) {
  const CombinedBasis& b = ops.basis;
  const int N = b.cell_count();
  if (mask.size() == 0) throw InvalidArgument("invalid mask: no cells");
  OutputMap m;
  m.H = Eigen::RowVectorXd::Zero(b.order());
  for (int c : mask.cells()) {
    if (!ops.grid.is_surface(c)) {
      throw InvalidArgument("invalid mask: cell " + std::to_string(c) + " is not a surface cell");
    }
    m.H.tail(b.n_T()) += b.modes_T().row(c);
    m.offset += b.mean()[N + c];
  }
  m.H /= mask.size();
  m.offset /= mask.size();
  return m;
}

inline double rom_output(const Eigen::VectorXd& c, const RomOperators& ops, const SurfaceMask& mask) {
  return rom_output_map(ops, mask)(c);
}

/// c0_i = <z0 - z_bar, phi_i>.
inline Eigen::VectorXd project_initial(const StateVector& z0, const CombinedBasis& basis) {
  return project(z0, basis);
}

struct RomTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> coefficients;
  OdeStats stats;
};

inline OdeOptions default_rom_tolerances() {
  OdeOptions o;
  o.rtol = 1e-7;
  o.atol = 1e-9;
  return o;
}

/// Integrates the ROM and samples it at `times` (times[0] is the initial time).
inline RomTrajectory integrate_rom(const Eigen::VectorXd& c0, const RomOperators& ops,
                                   const std::vector<double>& times,
                                   const OdeOptions& tol = default_rom_tolerances()) {
  if (c0.size() != ops.order()) throw DimensionError("initial coefficients have wrong length");
  if (times.empty()) throw InvalidArgument("no sample times");
  RomTrajectory tr;
  tr.times = times;
  auto f = [&ops](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy = rom_rhs_many(y, ops, t);
  };
  tr.coefficients = dopri5_sample(f, times.front(), c0, times, tol, &tr.stats);
  return tr;
}

struct RomSteadyState {
  Eigen::VectorXd c;
  double residual = 0.0;
  int iterations = 0;
};

/// Newton iteration on rom_rhs(c) = 0 with a finite-difference Jacobian.
inline RomSteadyState rom_steady_state(const Eigen::VectorXd& c_guess, const RomOperators& ops,
                                       double tol = 1e-12, int max_iter = 30, double t = 0.0) {
  Eigen::VectorXd c = c_guess;
  Eigen::VectorXd r = rom_rhs(c, ops, t);
  double res = r.lpNorm<Eigen::Infinity>();
  Eigen::VectorXd best = c;
  double best_res = res;
  const double scale = std::max(1.0, c.lpNorm<Eigen::Infinity>());
  for (int it = 0; it < max_iter; ++it) {
    if (res <= tol * scale) return {c, res, it};
    const Eigen::MatrixXd J = rom_jacobian(c, ops, t, 1e-6);
    const Eigen::VectorXd dc = J.colPivHouseholderQr().solve(-r);
    double step = 1.0;
    for (int ls = 0; ls < 20; ++ls) {
      const Eigen::VectorXd trial = c + step * dc;
      try {
        const Eigen::VectorXd rt = rom_rhs(trial, ops, t);
        const double rr = rt.lpNorm<Eigen::Infinity>();
        if (rr < res || ls == 19) {
          c = trial;
          r = rt;
          res = rr;
          break;
        }
      } catch (const DomainError&) {
      }
      step *= 0.5;
    }
    if (res < best_res) {
      best_res = res;
      best = c;
    }
  }
  if (best_res <= tol * scale) return {best, best_res, max_iter};
  std::ostringstream os;
  os << "ROM steady state not found (residual " << best_res << ")";
  throw NonConvergenceError(os.str(), best, best_res);
}

}  // namespace dryobs
