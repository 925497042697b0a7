#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"
#include "dryobs/fvm.hpp"
#include "dryobs/grid.hpp"
#include "dryobs/ode.hpp"
#include "dryobs/pod.hpp"
#include "dryobs/rom.hpp"

namespace dryobs {

inline OdeOptions default_filter_tolerances() {
  OdeOptions o;
  o.rtol = 1e-5;
  o.atol = 1e-8;
  return o;
}

struct EkfConfig {
  Eigen::MatrixXd Q;   ///< process noise, coefficient units^2 / s
  double R = 1.0;      ///< measurement noise variance, K^2
  Eigen::MatrixXd P0;  ///< initial covariance
  double measurement_interval = 5.0;
  double jacobian_step = 1e-5;
  OdeOptions ode = default_filter_tolerances();
  /// Absolute tolerance for covariance entries; <= 0 derives it from P0 and Q.
  double covariance_atol = 0.0;

  void validate(int n) const {
    if (Q.rows() != n || Q.cols() != n || P0.rows() != n || P0.cols() != n) {
      throw DimensionError("Q and P0 must be " + std::to_string(n) + " x " + std::to_string(n));
    }
    auto psd = [](const Eigen::MatrixXd& A, const char* name) {
      if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff())) {
        throw InvalidArgument(std::string(name) + " must be symmetric");
      }
      if (A.rows() > 0) {
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues().minCoeff();
        if (lmin < -1e-12 * std::max(1.0, A.trace())) {
          throw InvalidArgument(std::string(name) + " must be positive semidefinite");
        }
      }
    };
    psd(Q, "Q");
    psd(P0, "P0");
    if (!(R > 0.0)) throw InvalidArgument("R must be > 0");
    if (!(measurement_interval > 0.0)) throw InvalidArgument("measurement interval must be > 0");
    if (!(jacobian_step > 0.0)) throw InvalidArgument("jacobian step must be > 0");
  }
};

struct EkfRecord {
  double t = 0.0;
  Eigen::VectorXd c;
  Eigen::MatrixXd P;
  double measurement = 0.0;
  double innovation = 0.0;
  double innovation_variance = 0.0;
};

struct EkfState {
  Eigen::VectorXd c;
  Eigen::MatrixXd P;
  double t = 0.0;
  std::vector<EkfRecord> history;
};

inline void symmetrize(Eigen::MatrixXd& P) { P = 0.5 * (P + P.transpose()); }

/// Propagates the estimate and covariance from state.t to state.t + dt.
inline EkfState predict(const EkfState& state, const RomOperators& ops, const EkfConfig& cfg, double dt,
                        OdeStats* stats = nullptr) {
  if (!(dt > 0.0)) throw InvalidArgument("prediction interval must be > 0");
  const int n = ops.order();
  if (state.c.size() != n || state.P.rows() != n || state.P.cols() != n) {
    throw DimensionError("filter state does not match ROM order");
  }
  Eigen::VectorXd y(n + n * n);
  y.head(n) = state.c;
  y.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(state.P.data(), n * n);

  OdeOptions opt = cfg.ode;
  double p_atol = cfg.covariance_atol;
  if (!(p_atol > 0.0)) {
    const double scale = std::max({state.P.cwiseAbs().maxCoeff(), cfg.P0.cwiseAbs().maxCoeff(),
                                   cfg.Q.cwiseAbs().maxCoeff() * cfg.measurement_interval});
    p_atol = scale > 0.0 ? 1e-8 * scale : cfg.ode.atol;
  }
  opt.atol_vec.resize(n + n * n);
  opt.atol_vec.head(n).setConstant(cfg.ode.atol);
  opt.atol_vec.tail(n * n).setConstant(p_atol);

  auto f = [&](double t, const Eigen::VectorXd& yy, Eigen::VectorXd& dy) {
    const Eigen::VectorXd c = yy.head(n);
    Eigen::Map<const Eigen::MatrixXd> P(yy.data() + n, n, n);
    const auto [fc, F] = rom_rhs_and_jacobian(c, ops, t, cfg.jacobian_step);
    dy.resize(n + n * n);
    dy.head(n) = fc;
    Eigen::MatrixXd Pd = F * P + P * F.transpose() + cfg.Q;
    dy.tail(n * n) = Eigen::Map<Eigen::VectorXd>(Pd.data(), n * n);
  };
  const Eigen::VectorXd y1 = dopri5(f, state.t, y, state.t + dt, opt, [](const DenseStep&) { return true; }, stats);

  EkfState out;
  out.c = y1.head(n);
  out.P = Eigen::Map<const Eigen::MatrixXd>(y1.data() + n, n, n);
  symmetrize(out.P);
  out.t = state.t + dt;
  out.history = state.history;
  return out;
}

/// Measurement update with the affine output w = H c + offset.
inline EkfState update(const EkfState& state, double w, const OutputMap& output, const EkfConfig& cfg) {
  const Eigen::Index n = state.c.size();
  if (output.H.size() != n) throw DimensionError("output gradient does not match filter state");
  const Eigen::RowVectorXd& H = output.H;
  const double S = H * state.P * H.transpose() + cfg.R;
  if (!(S > 0.0) || !std::isfinite(S)) {
    std::ostringstream os;
    os << "innovation variance " << S << " is not positive";
    throw NumericalDegeneracyError(os.str());
  }
  const Eigen::VectorXd K = state.P * H.transpose() / S;
  const double innovation = w - output(state.c);
  EkfState out;
  out.t = state.t;
  out.c = state.c + K * innovation;
  out.P = (Eigen::MatrixXd::Identity(n, n) - K * H) * state.P;
  symmetrize(out.P);
  out.history = state.history;
  out.history.push_back({out.t, out.c, out.P, w, innovation, S});
  return out;
}

struct MeasurementStream {
  std::vector<double> times;
  std::vector<double> values;
  std::string source = "synthetic-twin";

  void validate() const {
    if (times.empty()) throw InvalidArgument("measurement stream is empty");
    if (times.size() != values.size()) throw DimensionError("measurement times and values differ in count");
    for (std::size_t k = 1; k < times.size(); ++k) {
      if (!(times[k] > times[k - 1])) throw InvalidArgument("measurement times must increase");
    }
  }
};

struct FilterRun {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> estimates;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<double> measurements;
  std::vector<double> innovations;
  std::vector<double> innovation_variances;
  std::vector<double> total_moisture;
  /// Wall-clock seconds of each predict + update pair.
  std::vector<double> step_seconds;
};

/// Total moisture of the reconstructed moisture field.
inline double rom_total_moisture(const Eigen::VectorXd& c, const CombinedBasis& b) {
  const int N = b.cell_count();
  return b.mean().head(N).mean() + (b.modes_x().colwise().mean() * c.head(b.n_x()))(0);
}

/// Alternates predict and update over the measurements with t_k > t0.
/// Records the initial estimate at t0 as the first entry.
inline FilterRun run_filter(const MeasurementStream& stream, const Eigen::VectorXd& c0, double t0,
                            const EkfConfig& cfg, const RomOperators& ops, const SurfaceMask& mask) {
  stream.validate();
  const int n = ops.order();
  cfg.validate(n);
  if (c0.size() != n) throw DimensionError("initial estimate has wrong length");
  const OutputMap out = rom_output_map(ops, mask);
  EkfState st{c0, cfg.P0, t0, {}};
  FilterRun run;
  auto record = [&](double w, double innov, double S, double secs) {
    run.times.push_back(st.t);
    run.estimates.push_back(st.c);
    run.covariances.push_back(st.P);
    run.measurements.push_back(w);
    run.innovations.push_back(innov);
    run.innovation_variances.push_back(S);
    run.total_moisture.push_back(rom_total_moisture(st.c, ops.basis));
    run.step_seconds.push_back(secs);
  };
  record(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.0);
  for (std::size_t k = 0; k < stream.times.size(); ++k) {
    const double tk = stream.times[k];
    if (tk <= t0) continue;
    const auto start = std::chrono::steady_clock::now();
    st = predict(st, ops, cfg, tk - st.t);
    st.t = tk;
    st = update(st, stream.values[k], out, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& rec = st.history.back();
    record(rec.measurement, rec.innovation, rec.innovation_variance, secs);
    st.history.clear();
  }
  return run;
}

/// Coefficients of the uniform field x = x_guess, T = w0.
inline Eigen::VectorXd init_from_measurement(double w0, double x_guess, const CombinedBasis& basis) {
  if (!(x_guess >= 0.0)) throw InvalidArgument("moisture guess must be >= 0");
  const int N = basis.cell_count();
  Eigen::VectorXd z(2 * N);
  z.head(N).setConstant(x_guess);
  z.tail(N).setConstant(w0);
  return project(z, basis);
}

struct EstimationErrors {
  double eps_T = 0.0;
  double eps_x = 0.0;
  double eps_X = 0.0;
};

namespace detail {
inline double normalized_rms(double sum_sq, long count, double lo, double hi, const char* what) {
  if (!(hi > lo)) {
    throw NumericalDegeneracyError(std::string("undefined normalization: ") + what +
                                   " has zero range");
  }
  return std::sqrt(sum_sq / static_cast<double>(count)) / (hi - lo);
}
}  // namespace detail

/// Normalized RMS errors of reconstructed fields against full states at the same times.
inline EstimationErrors estimation_errors(const std::vector<StateVector>& truth,
                                          const std::vector<Eigen::VectorXd>& coefficients,
                                          const CombinedBasis& basis) {
  if (truth.empty() || truth.size() != coefficients.size()) {
    throw DimensionError("truth and estimate sequences must be nonempty and of equal length");
  }
  const int N = basis.cell_count();
  double sT = 0, sx = 0, sX = 0;
  double Tlo = std::numeric_limits<double>::infinity(), Thi = -Tlo, xlo = Tlo, xhi = -Tlo, Xlo = Tlo,
         Xhi = -Tlo;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const StateVector& z = truth[j];
    if (z.size() != 2 * N) throw DimensionError("truth state does not match basis");
    const Eigen::VectorXd zh = reconstruct(coefficients[j], basis);
    sx += (z.head(N) - zh.head(N)).squaredNorm();
    sT += (z.tail(N) - zh.tail(N)).squaredNorm();
    const double X = z.head(N).mean(), Xh = zh.head(N).mean();
    sX += (X - Xh) * (X - Xh);
    Tlo = std::min(Tlo, z.tail(N).minCoeff());
    Thi = std::max(Thi, z.tail(N).maxCoeff());
    xlo = std::min(xlo, z.head(N).minCoeff());
    xhi = std::max(xhi, z.head(N).maxCoeff());
    Xlo = std::min(Xlo, X);
    Xhi = std::max(Xhi, X);
  }
  const long m = static_cast<long>(truth.size());
  EstimationErrors e;
  e.eps_T = detail::normalized_rms(sT, m * N, Tlo, Thi, "temperature");
  e.eps_x = detail::normalized_rms(sx, m * N, xlo, xhi, "moisture");
  e.eps_X = detail::normalized_rms(sX, m, Xlo, Xhi, "total moisture");
  return e;
}

/// First time after which |X_hat - X| / range(X) stays below `threshold`;
/// empty if the final sample violates it.
inline std::optional<double> convergence_time(const std::vector<double>& times,
                                              const std::vector<double>& X_true,
                                              const std::vector<double>& X_hat, double threshold = 0.05) {
  if (times.size() != X_true.size() || times.size() != X_hat.size() || times.empty()) {
    throw DimensionError("convergence series must be nonempty and of equal length");
  }
  const auto [lo, hi] = std::minmax_element(X_true.begin(), X_true.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw NumericalDegeneracyError("undefined normalization: total moisture has zero range");
  std::optional<double> t_conv;
  for (std::size_t k = times.size(); k-- > 0;) {
    if (std::abs(X_hat[k] - X_true[k]) / range < threshold) {
      t_conv = times[k];
    } else {
      break;
    }
  }
  return t_conv;
}

}  // namespace dryobs
