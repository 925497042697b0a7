#include <cmath>

#include <gtest/gtest.h>

#include "dryobs/ode.hpp"

namespace dryobs {
namespace {

TEST(Dopri5, ExponentialDecayToTolerance) {
  OdeOptions opt;
  opt.rtol = 1e-10;
  opt.atol = 1e-12;
  auto f = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -0.7 * y; };
  OdeStats st;
  const Eigen::VectorXd y = dopri5(f, 0.0, Eigen::VectorXd::Constant(1, 2.0), 5.0, opt,
                                   [](const DenseStep&) { return true; }, &st);
  EXPECT_NEAR(y[0], 2.0 * std::exp(-3.5), 1e-9);
  EXPECT_GT(st.accepted, 0);
  // Six stages per attempt (first-same-as-last) plus the initial and step-size probes.
  EXPECT_GE(st.rhs_evals, 6 * (st.accepted + st.rejected) + 1);
  EXPECT_LE(st.rhs_evals, 6 * (st.accepted + st.rejected) + 2);
}

TEST(Dopri5, DenseOutputIsFourthOrderAccurateInsideSteps) {
  OdeOptions opt;
  opt.rtol = 1e-9;
  opt.atol = 1e-12;
  // Harmonic oscillator y'' = -y.
  auto f = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy.resize(2);
    dy << y[1], -y[0];
  };
  double worst = 0.0;
  dopri5(f, 0.0, Eigen::Vector2d(1.0, 0.0), 10.0, opt, [&](const DenseStep& s) {
    for (double th : {0.25, 0.5, 0.75}) {
      const double t = s.t0 + th * s.h;
      worst = std::max(worst, std::abs(s.eval(t)[0] - std::cos(t)));
    }
    EXPECT_LT((s.p[0] + s.p[1] + s.p[2] + s.p[3] + s.p[4] - s.eval(s.t1())).norm(), 1e-14);
    return true;
  });
  EXPECT_LT(worst, 1e-7);
}

TEST(Dopri5, SamplesAtRequestedTimes) {
  auto f = [](double t, const Eigen::VectorXd&, Eigen::VectorXd& dy) { dy = Eigen::VectorXd::Constant(1, t); };
  OdeOptions opt;
  const auto out = dopri5_sample(f, 0.0, Eigen::VectorXd::Zero(1), {0.0, 0.5, 1.0, 3.0}, opt);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_NEAR(out[1][0], 0.125, 1e-12);
  EXPECT_NEAR(out[3][0], 4.5, 1e-12);
}

TEST(Dopri5, RejectsNonPositiveTolerances) {
  OdeOptions opt;
  opt.rtol = 0.0;
  auto f = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y; };
  EXPECT_THROW(dopri5(f, 0.0, Eigen::VectorXd::Ones(1), 1.0, opt, [](const DenseStep&) { return true; }),
               InvalidArgument);
}

}  // namespace
}  // namespace dryobs
