#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "dryobs/errors.hpp"

namespace dryobs {

/// Options for the Dormand-Prince 5(4) integrator.
struct OdeOptions {
  double rtol = 1e-7;
  double atol = 1e-10;
  /// Componentwise absolute tolerance; overrides `atol` when non-empty.
  Eigen::VectorXd atol_vec;
  double h_init = 0.0;  ///< 0 selects the initial step automatically
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 10'000'000;
};

/// One accepted step with its quartic dense-output polynomial
/// y(t0 + theta*h) = p[0] + p[1] theta + p[2] theta^2 + p[3] theta^3 + p[4] theta^4.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  std::array<Eigen::VectorXd, 5> p;

  double t1() const { return t0 + h; }

  Eigen::VectorXd eval(double t) const {
    const double th = (t - t0) / h;
    return p[0] + th * (p[1] + th * (p[2] + th * (p[3] + th * p[4])));
  }
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

namespace dopri {
// Butcher tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// Error estimate (5th minus 4th order weights).
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output.
inline constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                        d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                        d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dopri

/// Adaptive Dormand-Prince 5(4) with Hairer's dense output.
///
/// `f(t, y, dydt)` writes the derivative into `dydt`. `on_step(step)` is called
/// for every accepted step and returns false to stop early. Returns the state
/// at the final time reached.
template <class Rhs, class OnStep>
Eigen::VectorXd dopri5(Rhs&& f, double t0, const Eigen::VectorXd& y0, double t1,
                       const OdeOptions& opt, OnStep&& on_step, OdeStats* stats = nullptr) {
  using namespace dopri;
  using Eigen::VectorXd;
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0 || opt.atol_vec.size() > 0)) {
    throw InvalidArgument("integrator tolerances must be > 0");
  }
  const Eigen::Index n = y0.size();
  if (opt.atol_vec.size() != 0 && opt.atol_vec.size() != n) {
    throw DimensionError("absolute tolerance vector has wrong length");
  }
  if (opt.atol_vec.size() != 0 && !(opt.atol_vec.minCoeff() > 0.0)) {
    throw InvalidArgument("integrator tolerances must be > 0");
  }
  OdeStats local;
  OdeStats& st = stats ? *stats : local;
  VectorXd y = y0;
  if (t1 <= t0 || n == 0) return y;

  auto scale = [&](const VectorXd& a, const VectorXd& b) {
    VectorXd sc = opt.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs());
    if (opt.atol_vec.size() != 0) {
      sc += opt.atol_vec;
    } else {
      sc.array() += opt.atol;
    }
    return sc;
  };
  auto err_norm = [&](const VectorXd& e, const VectorXd& sc) {
    return std::sqrt((e.array() / sc.array()).square().mean());
  };

  VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
  f(t0, y, k1);
  ++st.rhs_evals;

  double h = opt.h_init;
  if (!(h > 0.0)) {
    // Hairer's starting-step heuristic.
    const VectorXd sc = scale(y, y);
    const double d0 = err_norm(y, sc), dd1 = err_norm(k1, sc);
    double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
    h0 = std::min(h0, t1 - t0);
    ytmp = y + h0 * k1;
    f(t0 + h0, ytmp, k2);
    ++st.rhs_evals;
    const double d2 = err_norm(k2 - k1, sc) / h0;
    const double m = std::max(dd1, d2);
    const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min({h, opt.h_max, t1 - t0});

  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0, beta = 0.04;
  double err_old = 1e-4;
  double t = t0;
  bool last_rejected = false;
  DenseStep step;
  for (auto& p : step.p) p.resize(n);

  while (t < t1) {
    if (st.accepted + st.rejected >= opt.max_steps) {
      std::ostringstream os;
      os << "integrator exceeded " << opt.max_steps << " steps at t=" << t;
      throw StiffnessError(os.str(), t);
    }
    const double h_min = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
    if (h < h_min) {
      std::ostringstream os;
      os << "step size underflow (h=" << h << ") at t=" << t;
      throw StiffnessError(os.str(), t);
    }
    if (t + h > t1 || t1 - (t + h) < h_min) h = t1 - t;

    ytmp = y + h * (a21 * k1);
    f(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, ytmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t + h, ynew, k7);
    st.rhs_evals += 6;

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double e = err_norm(err, scale(y, ynew));
    if (!std::isfinite(e)) e = 1e10;

    if (e <= 1.0) {
      ++st.accepted;
      step.t0 = t;
      step.h = h;
      const VectorXd& r1 = y;
      step.p[1] = ynew - y;                       // r2
      VectorXd r3 = h * k1 - step.p[1];
      VectorXd r4 = step.p[1] - h * k7 - r3;
      VectorXd r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      step.p[0] = r1;
      step.p[1] += r3;
      step.p[2] = -r3 + r4 + r5;
      step.p[3] = -r4 - 2.0 * r5;
      step.p[4] = r5;

      t = (t + h >= t1) ? t1 : t + h;
      y = ynew;
      k1 = k7;
      if (!y.allFinite()) {
        std::ostringstream os;
        os << "non-finite state at t=" << t;
        throw DivergenceError(os.str(), t);
      }
      if (!on_step(static_cast<const DenseStep&>(step))) return y;

      const double e_c = std::max(e, 1e-10);
      double fac = safety * std::pow(e_c, -0.2 + 0.75 * beta) * std::pow(err_old, beta);
      fac = std::clamp(fac, fac_min, fac_max);
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, opt.h_max);
      err_old = e_c;
      last_rejected = false;
    } else {
      ++st.rejected;
      h *= std::max(fac_min, safety * std::pow(e, -0.2));
      last_rejected = true;
    }
  }
  return y;
}

/// Samples the solution of y' = f(t, y) at the given increasing times (first >= t0).
template <class Rhs>
std::vector<Eigen::VectorXd> dopri5_sample(Rhs&& f, double t0, const Eigen::VectorXd& y0,
                                           const std::vector<double>& times, const OdeOptions& opt,
                                           OdeStats* stats = nullptr) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(times.size());
  std::size_t k = 0;
  while (k < times.size() && times[k] <= t0) {
    if (times[k] < t0) throw InvalidArgument("sample time before initial time");
    out.push_back(y0);
    ++k;
  }
  if (k == times.size()) return out;
  for (std::size_t j = k + 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) throw InvalidArgument("sample times must increase");
  }
  dopri5(f, t0, y0, times.back(), opt, [&](const DenseStep& s) {
    while (k < times.size() && times[k] <= s.t1()) {
      out.push_back(times[k] == s.t1() ? s.eval(s.t1()) : s.eval(times[k]));
      ++k;
    }
    return true;
  }, stats);
  while (out.size() < times.size()) out.push_back(out.back());
  return out;
}

}  // namespace dryobs
