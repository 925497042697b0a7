#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/mask.hpp"
#include "dryobs/ode.hpp"
#include "dryobs/parallel.hpp"
#include "dryobs/pod.hpp"
#include "dryobs/rom.hpp"

namespace dryobs {

/// Perturbation magnitudes h_d and the two signed identity directions.
struct PerturbationScheme {
  std::vector<double> magnitudes{1e-7, 1e-6, 1e-5};
  int directions = 2;

  int s() const { return static_cast<int>(magnitudes.size()); }
  int r() const { return directions; }
  /// (-1)^l for l = 1..r.
  static double sign(int l) { return (l % 2 == 0) ? 1.0 : -1.0; }

  void validate() const {
    if (magnitudes.empty()) throw InvalidArgument("perturbation scheme needs at least one magnitude");
    if (directions != 2) throw InvalidArgument("perturbation scheme uses exactly r = 2 directions");
    for (std::size_t a = 0; a < magnitudes.size(); ++a) {
      if (!(magnitudes[a] > 0.0)) throw InvalidArgument("perturbation magnitudes must be > 0");
      for (std::size_t b = 0; b < a; ++b) {
        if (magnitudes[a] == magnitudes[b]) {
          throw InvalidArgument("perturbation magnitudes must be distinct");
        }
      }
    }
  }
};

/// c0 = h_d (-1)^l e_i + c_ss, ordered d outer, l middle, i inner.
inline std::vector<Eigen::VectorXd> gramian_initial_conditions(const PerturbationScheme& scheme,
                                                               const Eigen::VectorXd& c_ss) {
  scheme.validate();
  std::vector<Eigen::VectorXd> out;
  const Eigen::Index n = c_ss.size();
  out.reserve(static_cast<std::size_t>(scheme.s() * scheme.r() * n));
  for (double h : scheme.magnitudes) {
    for (int l = 1; l <= scheme.r(); ++l) {
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd c = c_ss;
        c[i] += h * PerturbationScheme::sign(l);
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

/// Output sampling for the Gramian sums: t_j = j dt, j = 0..m_f.
struct SamplingOptions {
  double dt = 0.005;
  long m_f = 1'000'000;
  /// Allowed output drift over the last 1% of samples, relative to the output range.
  double settle_tol = 1e-9;
  double rtol = 1e-8;
  /// Absolute tolerance relative to the perturbation magnitude.
  double atol_rel = 1e-10;

  double horizon() const { return dt * static_cast<double>(m_f); }

  void validate() const {
    if (!(dt > 0.0)) throw InvalidArgument("sampling interval must be > 0");
    if (m_f < 1) throw InvalidArgument("m_f must be >= 1");
    if (!(settle_tol >= 0.0)) throw InvalidArgument("settle tolerance must be >= 0");
    if (!(rtol > 0.0 && atol_rel > 0.0)) throw InvalidArgument("tolerances must be > 0");
  }
};

/// Sums over the samples of a batch of responses with stacked outputs Y(t).
struct GroupResponse {
  /// sum_j (Y_j - Y_ss)(Y_j - Y_ss)^T with Y_ss the final sample (no dt factor).
  Eigen::MatrixXd psi;
  Eigen::VectorXd y_final;
  /// Y at the first sample of the last 1% window.
  Eigen::VectorXd y_window;
  /// Outputs at every step end (columns), used for range estimates of derived outputs.
  Eigen::MatrixXd y_steps;
  long samples = 0;
  OdeStats stats;

  /// Range of w = L Y estimated from the recorded step ends (rows of L are outputs).
  Eigen::VectorXd range(const Eigen::MatrixXd& L) const {
    const Eigen::MatrixXd W = L * y_steps;
    return W.rowwise().maxCoeff() - W.rowwise().minCoeff();
  }
};

/// Integrates a batch of deviation trajectories E (dim x B) with outputs Y = Cout E
/// per column and accumulates the output covariance sums in closed form.
///
/// Each accepted step carries a quartic dense-output polynomial, so the sum over
/// the samples inside a step is P H P^T with P = [Y_0 .. Y_4] the polynomial
/// coefficients and H the Hankel matrix of the power sums of the sample phases.
template <class BatchRhs>
GroupResponse response_moments(BatchRhs&& f, const Eigen::MatrixXd& E0, const Eigen::MatrixXd& Cout,
                               const SamplingOptions& so, double atol) {
  so.validate();
  const Eigen::Index dim = E0.rows(), B = E0.cols(), q = Cout.rows();
  if (Cout.cols() != dim) throw DimensionError("output matrix does not match state dimension");
  const Eigen::Index Q = q * B;
  const double T_end = so.horizon();
  const long window_start = so.m_f - static_cast<long>(std::ceil(0.01 * static_cast<double>(so.m_f)));

  auto outputs = [&](const Eigen::VectorXd& v) {
    Eigen::Map<const Eigen::MatrixXd> M(v.data(), dim, B);
    Eigen::MatrixXd Y = Cout * M;
    return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(Y.data(), Q));
  };

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(Q, Q);
  Eigen::VectorXd M1 = Eigen::VectorXd::Zero(Q);
  long K = 0;
  long next_sample = 0;
  GroupResponse out;
  std::vector<Eigen::VectorXd> ends;
  Eigen::VectorXd y0 = Eigen::Map<const Eigen::VectorXd>(E0.data(), dim * B);
  ends.push_back(outputs(y0));
  out.y_window = ends.front();

  Eigen::MatrixXd P(Q, 5);
  std::array<double, 9> S{};
  auto consume = [&](const DenseStep& st) {
    for (int k = 0; k < 5; ++k) P.col(k) = outputs(st.p[k]);
    const bool last = st.t1() >= T_end;
    long j_hi = last ? so.m_f
                     : std::min<long>(so.m_f, static_cast<long>(std::floor(st.t1() / so.dt)));
    if (!last && static_cast<double>(j_hi + 1) * so.dt <= st.t1()) ++j_hi;
    S.fill(0.0);
    long count = 0;
    for (long j = next_sample; j <= j_hi; ++j) {
      const double th = (static_cast<double>(j) * so.dt - st.t0) / st.h;
      double pw = 1.0;
      for (int p = 0; p < 9; ++p) {
        S[p] += pw;
        pw *= th;
      }
      if (j == window_start) {
        out.y_window = P.col(0) + th * (P.col(1) + th * (P.col(2) + th * (P.col(3) + th * P.col(4))));
      }
      ++count;
    }
    if (count > 0) {
      Eigen::Matrix<double, 5, 5> H;
      for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) H(a, b) = S[a + b];
      G.noalias() += P * H * P.transpose();
      M1.noalias() += P * Eigen::Map<Eigen::Matrix<double, 5, 1>>(S.data());
      K += count;
      next_sample = j_hi + 1;
    }
    ends.push_back(P.rowwise().sum());
    return true;
  };

  OdeOptions opt;
  opt.rtol = so.rtol;
  opt.atol = atol;
  auto rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    Eigen::Map<const Eigen::MatrixXd> E(y.data(), dim, B);
    Eigen::MatrixXd D = f(t, E);
    dy = Eigen::Map<Eigen::VectorXd>(D.data(), dim * B);
  };
  const Eigen::VectorXd y_end = dopri5(rhs, 0.0, y0, T_end, opt, consume, &out.stats);

  if (K != so.m_f + 1) {
    std::ostringstream os;
    os << "internal sampling error: " << K << " samples instead of " << so.m_f + 1;
    throw NumericalError(os.str());
  }
  out.samples = K;
  out.y_final = outputs(y_end);
  if (window_start <= 0) out.y_window = ends.front();
  const Eigen::VectorXd& ss = out.y_final;
  out.psi = G - ss * M1.transpose() - M1 * ss.transpose() + static_cast<double>(K) * ss * ss.transpose();
  out.y_steps.resize(Q, static_cast<Eigen::Index>(ends.size()));
  for (std::size_t k = 0; k < ends.size(); ++k) out.y_steps.col(static_cast<Eigen::Index>(k)) = ends[k];
  return out;
}

/// Reduced Gramian with eigen-analysis and observability measure.
struct GramianResult {
  Eigen::MatrixXd W;
  double cell_volume = 0.0;
  /// Eigenvalues of dV * W in descending order (raw, may be slightly negative).
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double kappa = 0.0;
  /// Columns nu_k / sqrt(max(beta_k, 0)); infinite for zero eigenvalues.
  Eigen::MatrixXd semi_axes;
  PerturbationScheme scheme;
  SamplingOptions sampling;
  Eigen::VectorXd c_ss;
  std::vector<int> mask;
  long rhs_evals = 0;

  double min_eigenvalue() const { return eigenvalues.size() ? eigenvalues.minCoeff() : 0.0; }
  double kappa_from_eigenvalues() const { return eigenvalues.sum(); }
};

/// Fills eigenpairs, kappa and semi-axes from W.
inline void analyse_gramian(GramianResult& r) {
  r.W = 0.5 * (r.W + r.W.transpose());
  r.kappa = r.cell_volume * r.W.trace();
  const Eigen::Index n = r.W.rows();
  if (n == 0) {
    r.eigenvalues.resize(0);
    r.eigenvectors.resize(0, 0);
    r.semi_axes.resize(0, 0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.cell_volume * r.W);
  r.eigenvalues = es.eigenvalues().reverse();
  r.eigenvectors = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index imax = 0;
    r.eigenvectors.col(k).cwiseAbs().maxCoeff(&imax);
    if (r.eigenvectors(imax, k) < 0) r.eigenvectors.col(k) *= -1.0;
  }
  r.semi_axes.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double b = std::max(r.eigenvalues[k], 0.0);
    r.semi_axes.col(k) = b > 0 ? Eigen::VectorXd(r.eigenvectors.col(k) / std::sqrt(b))
                               : Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  }
}

namespace detail {

/// `floor` is the drift attributable to the integration tolerance alone; outputs
/// that barely respond would otherwise fail on round-off.
inline void check_settled(const GroupResponse& g, const Eigen::MatrixXd& L, double tol, int d, int l,
                          int q_per_traj, double floor = 0.0) {
  const Eigen::VectorXd range = g.range(L);
  const Eigen::VectorXd drift = (L * (g.y_final - g.y_window)).cwiseAbs();
  for (Eigen::Index a = 0; a < drift.size(); ++a) {
    if (drift[a] > tol * range[a] + floor) {
      const int i = static_cast<int>(a / q_per_traj);
      std::ostringstream os;
      os << "response (d=" << d << ", l=" << l << ", i=" << i << ") not settled: drift "
         << drift[a] << " over the last 1% exceeds " << tol << " x range " << range[a];
      throw SteadyStateError(os.str(), d, l, i);
    }
  }
}

/// Runs the s*r groups of ROM responses with outputs Cout e per trajectory.
inline std::vector<GroupResponse> rom_groups(const RomOperators& ops, const PerturbationScheme& scheme,
                                             const Eigen::VectorXd& c_ss, const Eigen::MatrixXd& Cout,
                                             const SamplingOptions& so) {
  scheme.validate();
  so.validate();
  const int n = ops.order();
  if (c_ss.size() != n) throw DimensionError("steady state has wrong length");
  const int groups = scheme.s() * scheme.r();
  std::vector<GroupResponse> out(static_cast<std::size_t>(groups));
  parallel_for(groups, [&](int g) {
    const int d = g / scheme.r();
    const int l = g % scheme.r() + 1;
    const double h = scheme.magnitudes[static_cast<std::size_t>(d)];
    const Eigen::MatrixXd E0 = h * PerturbationScheme::sign(l) * Eigen::MatrixXd::Identity(n, n);
    auto f = [&](double t, const Eigen::Ref<const Eigen::MatrixXd>& E) {
      Eigen::MatrixXd C = E;
      C.colwise() += c_ss;
      return rom_rhs_many(C, ops, t);
    };
    out[static_cast<std::size_t>(g)] = response_moments(f, E0, Cout, so, so.atol_rel * h);
  });
  return out;
}

}  // namespace detail

/// Reduced observability Gramian for the averaging output of `mask`.
inline GramianResult reduced_gramian(const RomOperators& ops, const SurfaceMask& mask,
                                     const PerturbationScheme& scheme, const Eigen::VectorXd& c_ss,
                                     const SamplingOptions& so) {
  const int n = ops.order();
  const OutputMap out = rom_output_map(ops, mask);
  const Eigen::MatrixXd Cout = out.H;
  const auto groups = detail::rom_groups(ops, scheme, c_ss, Cout, so);
  GramianResult r;
  r.cell_volume = ops.grid.cell_volume();
  r.W = Eigen::MatrixXd::Zero(n, n);
  for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
    const int d = g / scheme.r();
    const int l = g % scheme.r() + 1;
    const auto& gr = groups[static_cast<std::size_t>(g)];
    const double h = scheme.magnitudes[static_cast<std::size_t>(d)];
    detail::check_settled(gr, Eigen::MatrixXd::Identity(n, n), so.settle_tol, d, l, 1,
                          10.0 * so.atol_rel * h * Cout.cwiseAbs().sum());
    const Eigen::MatrixXd D = PerturbationScheme::sign(l) * Eigen::MatrixXd::Identity(n, n);
    r.W += (so.dt / (scheme.r() * scheme.s() * h * h)) * (D * gr.psi * D.transpose());
    r.rhs_evals += gr.stats.rhs_evals;
  }
  r.scheme = scheme;
  r.sampling = so;
  r.c_ss = c_ss;
  r.mask = mask.cells();
  analyse_gramian(r);
  return r;
}

inline double observability_measure(const GramianResult& r) { return r.cell_volume * r.W.trace(); }

/// Eigenpairs of dV * W lifted to the full state space.
struct GramianEigs {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd reduced_vectors;
  /// Unit-norm lifted eigenvectors sqrt(dV) Phi nu_k (2N x n).
  Eigen::MatrixXd lifted_vectors;
  Eigen::MatrixXd semi_axes;
  double min_eigenvalue = 0.0;
  bool positive_definite = false;
};

inline GramianEigs gramian_eigs(const GramianResult& r, const CombinedBasis& basis) {
  if (basis.order() != r.W.rows()) throw DimensionError("basis order does not match Gramian");
  GramianEigs e;
  e.eigenvalues = r.eigenvalues;
  e.reduced_vectors = r.eigenvectors;
  e.semi_axes = r.semi_axes;
  e.lifted_vectors = std::sqrt(basis.cell_volume()) * (basis.phi() * r.eigenvectors);
  e.min_eigenvalue = r.min_eigenvalue();
  e.positive_definite = e.min_eigenvalue > 0.0;
  return e;
}

/// G = dV^2 Phi W Phi^T kept in factored form.
class LiftedGramian {
 public:
  LiftedGramian(const GramianResult& r, const CombinedBasis& basis, int dense_limit = 512)
      : W_(r.W), phi_(basis.phi()), dV_(basis.cell_volume()), dense_limit_(dense_limit) {
    if (basis.order() != r.W.rows()) throw DimensionError("basis order does not match Gramian");
  }

  Eigen::Index size() const { return phi_.rows(); }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (v.size() != size()) throw DimensionError("vector length does not match lifted Gramian");
    return dV_ * dV_ * (phi_ * (W_ * (phi_.transpose() * v)));
  }

  double trace() const { return dV_ * dV_ * (W_ * (phi_.transpose() * phi_)).trace(); }

  Eigen::MatrixXd dense() const {
    if (size() > dense_limit_) {
      throw InvalidArgument("lifted Gramian of size " + std::to_string(size()) +
                            " exceeds the densification limit " + std::to_string(dense_limit_));
    }
    return dV_ * dV_ * phi_ * W_ * phi_.transpose();
  }

 private:
  Eigen::MatrixXd W_;
  Eigen::MatrixXd phi_;
  double dV_;
  int dense_limit_;
};

inline LiftedGramian lift_gramian(const GramianResult& r, const CombinedBasis& basis,
                                  int dense_limit = 512) {
  return LiftedGramian(r, basis, dense_limit);
}

struct SweepEntry {
  int cell = 0;
  CellIndex3 ijk{};
  std::string faces;
  std::string surface_class;
  double kappa = 0.0;
};

struct PositionSweepResult {
  std::vector<SweepEntry> entries;
  /// Entry indices sorted by decreasing kappa.
  std::vector<int> ranking;
  long rhs_evals = 0;
};

/// kappa for single-cell outputs on every listed surface cell (all surface cells if empty).
///
/// The responses do not depend on the mask: they are integrated once with all
/// temperature coefficients as outputs, and each cell's kappa is a quadratic
/// form of the recorded covariance sums.
inline PositionSweepResult position_sweep(const RomOperators& ops, const PerturbationScheme& scheme,
                                          const Eigen::VectorXd& c_ss, const SamplingOptions& so,
                                          std::vector<int> cells = {}) {
  const CombinedBasis& b = ops.basis;
  const int n = b.order(), nT = b.n_T();
  if (cells.empty()) {
    for (const auto& sc : ops.grid.surface_cells()) cells.push_back(sc.cell);
  }
  for (int c : cells) {
    if (!ops.grid.is_surface(c)) {
      throw InvalidArgument("invalid mask: cell " + std::to_string(c) + " is not a surface cell");
    }
  }
  Eigen::MatrixXd Cout = Eigen::MatrixXd::Zero(nT, n);
  Cout.rightCols(nT).setIdentity();
  const auto groups = detail::rom_groups(ops, scheme, c_ss, Cout, so);

  PositionSweepResult res;
  res.entries.resize(cells.size());
  const double dV = b.cell_volume();
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int c = cells[k];
    const Eigen::RowVectorXd hk = b.modes_T().row(c);
    // Output of mask {c} for every trajectory: block-diagonal selector n x (n nT).
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(n) * nT);
    for (int i = 0; i < n; ++i) L.block(i, static_cast<Eigen::Index>(i) * nT, 1, nT) = hk;
    double kappa = 0.0;
    for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
      const int d = g / scheme.r();
      const int l = g % scheme.r() + 1;
      const auto& gr = groups[static_cast<std::size_t>(g)];
      const double h = scheme.magnitudes[static_cast<std::size_t>(d)];
      detail::check_settled(gr, L, so.settle_tol, d, l, 1, 10.0 * so.atol_rel * h * hk.cwiseAbs().sum());
      double tr = 0.0;
      for (int i = 0; i < n; ++i) {
        const Eigen::Index o = static_cast<Eigen::Index>(i) * nT;
        tr += hk * gr.psi.block(o, o, nT, nT) * hk.transpose();
      }
      kappa += so.dt / (scheme.r() * scheme.s() * h * h) * tr;
    }
    SweepEntry& e = res.entries[k];
    e.cell = c;
    e.ijk = ops.grid.ijk(c);
    e.faces = normals_label(ops.grid, c);
    e.surface_class = surface_class(ops.grid, c);
    e.kappa = dV * kappa;
  }
  for (const auto& gr : groups) res.rhs_evals += gr.stats.rhs_evals;
  res.ranking.resize(res.entries.size());
  for (std::size_t k = 0; k < res.ranking.size(); ++k) res.ranking[k] = static_cast<int>(k);
  std::stable_sort(res.ranking.begin(), res.ranking.end(),
                   [&](int a, int c) { return res.entries[a].kappa > res.entries[c].kappa; });
  return res;
}

/// Largest state dimension accepted by the full-order oracle routines.
inline constexpr int kFullOrderLimit = 512;

/// Brute-force empirical Gramian of a full-order system (test scale only).
///
/// `f(t, Z)` evaluates the right-hand side for a block of state columns,
/// `C` is the (affine-free) output row, `D` holds the r orthonormal direction
/// matrices, and z0 = h_d D_l e_i + z_ss.
template <class BatchRhs>
Eigen::MatrixXd empirical_gramian_full(BatchRhs&& f, const Eigen::RowVectorXd& C,
                                       const Eigen::VectorXd& z_ss,
                                       const std::vector<Eigen::MatrixXd>& D,
                                       const std::vector<double>& magnitudes,
                                       const SamplingOptions& so) {
  const Eigen::Index M = z_ss.size();
  if (M > kFullOrderLimit) {
    throw InvalidArgument("full-order Gramian refused: state dimension " + std::to_string(M) +
                          " exceeds " + std::to_string(kFullOrderLimit));
  }
  if (C.size() != M) throw DimensionError("output row does not match state dimension");
  if (D.empty() || magnitudes.empty()) throw InvalidArgument("empty perturbation scheme");
  for (const auto& Dl : D) {
    if (Dl.rows() != M || Dl.cols() != M) throw DimensionError("direction matrix must be M x M");
  }
  const int r = static_cast<int>(D.size()), s = static_cast<int>(magnitudes.size());
  std::vector<Eigen::MatrixXd> parts(static_cast<std::size_t>(r * s));
  parallel_for(r * s, [&](int g) {
    const int d = g / r, l = g % r;
    const double h = magnitudes[static_cast<std::size_t>(d)];
    const Eigen::MatrixXd E0 = h * D[static_cast<std::size_t>(l)];
    auto fe = [&](double t, const Eigen::Ref<const Eigen::MatrixXd>& E) {
      Eigen::MatrixXd Z = E;
      Z.colwise() += z_ss;
      return f(t, Z);
    };
    const GroupResponse gr = response_moments(fe, E0, C, so, so.atol_rel * h);
    detail::check_settled(gr, Eigen::MatrixXd::Identity(M, M), so.settle_tol, d, l + 1, 1,
                          10.0 * so.atol_rel * h * C.cwiseAbs().sum());
    const auto& Dl = D[static_cast<std::size_t>(l)];
    parts[static_cast<std::size_t>(g)] = (so.dt / (r * s * h * h)) * (Dl * gr.psi * Dl.transpose());
  });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, M);
  for (const auto& p : parts) G += p;
  return 0.5 * (G + G.transpose());
}

/// D_l = [(-1)^l sqrt(dV) Phi, H] with H an orthonormal basis of ker(Phi^T).
inline Eigen::MatrixXd build_perturbation_matrix(const CombinedBasis& basis, int l,
                                                 int limit = kFullOrderLimit) {
  const int M = basis.state_size(), n = basis.order();
  if (M > limit) {
    throw InvalidArgument("perturbation matrix refused: M = " + std::to_string(M) + " exceeds " +
                          std::to_string(limit));
  }
  const Eigen::MatrixXd U = std::sqrt(basis.cell_volume()) * basis.phi();
  Eigen::MatrixXd D(M, M);
  D.leftCols(n) = PerturbationScheme::sign(l) * U;
  if (n < M) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(U);
    const Eigen::MatrixXd Qfull = qr.householderQ() * Eigen::MatrixXd::Identity(M, M);
    D.rightCols(M - n) = Qfull.rightCols(M - n);
  }
  return D;
}

}  // namespace dryobs
