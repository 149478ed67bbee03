#include <cmath>

#include <gtest/gtest.h>

#include "lvdfm/kalman.hpp"
#include "lvdfm/pgas.hpp"
#include "oracles.hpp"

using namespace lvdfm;
namespace lt = lvdfm::testing;

namespace {

// J = 1, k = 1, two factor lags and two idiosyncratic lags.
struct SmallModel {
  Panel panel;
  ParamDraw d;
};

SmallModel small_model(int n, int t_len, std::uint64_t seed) {
  Rng rng(seed);
  SmallModel s;
  ParamDraw& d = s.d;
  d.gamma = MatrixXd::Zero(5, 2);
  d.gamma(0, 0) = 0.5;
  d.gamma(1, 1) = 0.6;
  d.gamma(2, 0) = 0.2;
  d.gamma(3, 1) = -0.1;
  d.gamma(4, 0) = 0.1;
  d.a_mat = MatrixXd::Identity(2, 2);
  d.a_mat(1, 0) = 0.3;
  d.h_diag = Eigen::Vector2d(0.5, 0.1);
  d.b_level = MatrixXd::Ones(n, 1) + 0.3 * MatrixXd::Random(n, 1);
  d.b_vol = 0.5 * MatrixXd::Random(n, 1);
  d.rho = 0.2 * MatrixXd::Random(n, 2);
  d.lambda = (MatrixXd::Random(n, t_len).array().abs() + 0.5).matrix();
  d.nu = VectorXd::Constant(n, 10.0);
  s.panel = make_panel(MatrixXd::Random(n, t_len) * 2.0, std::vector<TCode>(n, TCode::None), {}, {}, false);
  return s;
}

// Linear model with one level factor and no volatility factors.
SmallModel linear_model(int n, int t_len, std::uint64_t seed) {
  Rng rng(seed);
  SmallModel s;
  ParamDraw& d = s.d;
  d.gamma.resize(2, 1);
  d.gamma << 0.7, 0.2;
  d.a_mat = MatrixXd::Identity(1, 1);
  d.h_diag = VectorXd::Constant(1, 0.6);
  d.b_level.resize(n, 1);
  d.rho.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    d.b_level(i, 0) = 0.6 + 0.2 * i;
    d.rho(i, 0) = 0.15 * i;
  }
  d.b_vol.resize(n, 0);
  d.lambda = MatrixXd::Ones(n, t_len);
  d.nu = VectorXd::Constant(n, 10.0);
  MatrixXd x(n, t_len);
  double f = 0.0;
  VectorXd v = VectorXd::Zero(n);
  for (int t = 0; t < t_len; ++t) {
    f = 0.2 + 0.7 * f + std::sqrt(0.6) * rng.normal();
    for (int i = 0; i < n; ++i) {
      v[i] = d.rho(i, 0) * v[i] + rng.normal();
      x(i, t) = d.b_level(i, 0) * f + v[i];
    }
  }
  s.panel = make_panel(x, std::vector<TCode>(n, TCode::None), {}, {}, false);
  return s;
}

LinearStateSpace to_linear(const SmallModel& s) {
  LinearStateSpace ss;
  ss.gamma = s.d.gamma;
  ss.omega = s.d.omega();
  ss.b_level = s.d.b_level;
  ss.rho = s.d.rho;
  ss.r = MatrixXd::Ones(s.d.b_level.rows(), s.panel.n_periods());
  ss.x_qd = quasi_difference_panel(s.panel.data, s.d.rho);
  ss.first_obs = static_cast<int>(s.d.rho.cols());
  return ss;
}

}  // namespace

TEST(PgasModel, ObservationMatchesObsLoglik) {
  const SmallModel s = small_model(4, 10, 1);
  const PgasModel model(s.panel, s.d);
  const MatrixXd x_qd = quasi_difference_panel(s.panel.data, s.d.rho);
  const MatrixXd hist = MatrixXd::Random(1, 3);
  const VectorXd vol = VectorXd::Constant(1, 0.4);
  for (int t = 2; t < 10; ++t)
    EXPECT_NEAR(model.observation_loglik(t, hist, vol), obs_loglik(x_qd.col(t), hist, s.d, vol, t), 1e-10);
  EXPECT_EQ(model.observation_loglik(1, hist, vol), 0.0);
  EXPECT_EQ(model.window(), 3);
}

TEST(PgasModel, TransitionDensityIsGaussian) {
  const SmallModel s = small_model(3, 8, 2);
  const PgasModel model(s.panel, s.d);
  const MatrixXd lags = MatrixXd::Random(2, 2);
  const VectorXd x = Eigen::Vector2d(0.3, -0.2);
  const VectorXd mean = s.d.intercept() + s.d.beta(1) * lags.col(0) + s.d.beta(2) * lags.col(1);
  EXPECT_LT((model.transition_mean(lags) - mean).cwiseAbs().maxCoeff(), 1e-14);
  const MatrixXd om = s.d.omega();
  const double expect = -std::log(2 * M_PI) - 0.5 * std::log(om.determinant()) -
                        0.5 * (x - mean).dot(om.inverse() * (x - mean));
  EXPECT_NEAR(model.transition_logdensity(x, lags), expect, 1e-12);
}

TEST(AncestorLogweights, MatchesSplicedJointDensity) {
  const int t_len = 9, m = 2, np = 6, t = 4;
  const SmallModel s = small_model(3, t_len, 3);
  const PgasModel model(s.panel, s.d);
  Rng rng(4);
  MatrixXd ref = MatrixXd::Random(t_len, m);
  MatrixXd windows = MatrixXd::Random(m * model.window(), np);
  VectorXd filt = rng.normal_vector(np);
  const VectorXd alw = ancestor_logweights(model, t, windows, ref, filt);

  // Joint density of the spliced path over every term at or after t.
  VectorXd brute(np);
  for (int i = 0; i < np; ++i) {
    MatrixXd path = ref;
    for (int l = 1; l <= model.window(); ++l) path.row(t - l) = windows.col(i).segment((l - 1) * m, m).transpose();
    double lp = filt[i];
    for (int u = t; u < t_len; ++u) {
      MatrixXd lags(m, 2);
      for (int l = 1; l <= 2; ++l) lags.col(l - 1) = u - l >= 0 ? VectorXd(path.row(u - l).transpose()) : VectorXd::Zero(m);
      lp += model.transition_logdensity(path.row(u).transpose(), lags);
      MatrixXd hist(1, 3);
      for (int l = 0; l <= 2; ++l) hist(0, l) = path(u - l, 0);
      lp += model.observation_loglik(u, hist, path.row(u).tail(1).transpose());
    }
    brute[i] = lp;
  }
  const VectorXd diff = alw - brute;
  EXPECT_LT((diff.array() - diff[0]).abs().maxCoeff(), 1e-9);
}

TEST(PgasDraw, ReferenceSurvives) {
  const SmallModel s = small_model(4, 30, 5);
  const PgasModel model(s.panel, s.d);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = 0.3 * MatrixXd::Random(30, 2);
  Rng rng(6);
  PgasTrace trace;
  const FactorPath out = pgas_draw(model, ref, 10, rng, &trace);
  EXPECT_EQ(trace.reference_states, ref.path);
  EXPECT_LT((trace.weight_sums.array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(out.path.rows(), 30);
  EXPECT_EQ(out.n_level, 1);
  EXPECT_TRUE(out.path.allFinite());
}

TEST(PgasDraw, Deterministic) {
  const SmallModel s = small_model(4, 20, 7);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = MatrixXd::Zero(20, 2);
  const FactorPath a = pgas_draw(s.panel, s.d, ref, 8, 42);
  const FactorPath b = pgas_draw(s.panel, s.d, ref, 8, 42);
  const FactorPath c = pgas_draw(s.panel, s.d, ref, 8, 43);
  EXPECT_EQ(a.path, b.path);
  EXPECT_NE(a.path, c.path);
}

TEST(PgasDraw, InvalidArguments) {
  const SmallModel s = small_model(3, 10, 8);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = MatrixXd::Zero(10, 2);
  EXPECT_THROW(pgas_draw(s.panel, s.d, ref, 1, 1), Error);
  ref.path = MatrixXd::Zero(9, 2);
  EXPECT_THROW(pgas_draw(s.panel, s.d, ref, 5, 1), Error);
}

TEST(PgasDraw, PreservesExactPosterior) {
  // A reference drawn exactly from the smoothing distribution stays exact
  // after one sweep, so single-sweep draws match the exact moments.
  const SmallModel s = linear_model(3, 12, 9);
  const LinearStateSpace ss = to_linear(s);
  const lt::GaussianMoments exact = lt::dense_smoother(ss);
  const PgasModel model(s.panel, s.d);
  Rng krng(10), prng(11);
  const int reps = 6000;
  MatrixXd draws(reps, 12);
  for (int r = 0; r < reps; ++r) {
    FactorPath ref;
    ref.n_level = 1;
    ref.path = ffbs_draw(ss, krng);
    draws.row(r) = pgas_draw(model, ref, 5, prng).path.col(0).transpose();
  }
  for (int t = 0; t < 12; ++t) {
    const VectorXd col = draws.col(t);
    const double se = std::sqrt(exact.var(t, 0) / reps);
    EXPECT_LT(std::abs(col.mean() - exact.mean(t, 0)), 4.5 * se) << "t=" << t;
    const double v = (col.array() - col.mean()).square().mean();
    EXPECT_NEAR(v / exact.var(t, 0), 1.0, 0.1) << "t=" << t;
  }
}

namespace {

// One lag of F and no idiosyncratic dynamics.
SmallModel single_lag_model(int n, int t_len, double h_scale) {
  SmallModel s = small_model(n, t_len, 12);
  ParamDraw& d = s.d;
  d.gamma = MatrixXd::Zero(3, 2);
  d.gamma(0, 0) = 0.6;
  d.gamma(1, 0) = 0.1;
  d.gamma(1, 1) = 0.5;
  d.gamma(2, 1) = -0.2;
  d.h_diag *= h_scale;
  d.rho.resize(n, 0);
  return s;
}

}  // namespace

TEST(AncestorLogweights, SingleLagReducesToTransitionTerm) {
  const int t_len = 7, np = 5, t = 3;
  const SmallModel s = single_lag_model(3, t_len, 1.0);
  const PgasModel model(s.panel, s.d);
  Rng rng(13);
  const MatrixXd ref = MatrixXd::Random(t_len, 2);
  const MatrixXd windows = MatrixXd::Random(2 * model.window(), np);
  const VectorXd filt = rng.normal_vector(np);
  const VectorXd alw = ancestor_logweights(model, t, windows, ref, filt);
  const MatrixXd om = s.d.omega();
  const MatrixXd oinv = om.inverse();
  for (int i = 0; i < np; ++i) {
    const VectorXd prev = windows.col(i).head(2);
    const VectorXd mean = s.d.gamma.topRows(2).transpose() * prev + s.d.gamma.row(2).transpose();
    const VectorXd e = ref.row(t).transpose() - mean;
    const double expect = filt[i] - std::log(2 * M_PI) - 0.5 * std::log(om.determinant()) - 0.5 * e.dot(oinv * e);
    EXPECT_NEAR(alw[i], expect, 1e-12);
  }
}

TEST(AncestorLogweights, FlatTransitionLeavesFilterWeights) {
  const int t_len = 7, np = 5, t = 3;
  const SmallModel s = single_lag_model(3, t_len, 1e16);
  const PgasModel model(s.panel, s.d);
  Rng rng(14);
  const MatrixXd ref = MatrixXd::Random(t_len, 2);
  const MatrixXd windows = MatrixXd::Random(2 * model.window(), np);
  const VectorXd filt = rng.normal_vector(np);
  const VectorXd diff = ancestor_logweights(model, t, windows, ref, filt) - filt;
  EXPECT_LT((diff.array() - diff[0]).abs().maxCoeff(), 1e-8);
}

TEST(PgasDraw, NoiselessObservationsPinThePath) {
  const int n = 4, t_len = 15;
  SmallModel s = linear_model(n, t_len, 15);
  s.d.rho.setZero();
  s.d.lambda.setConstant(1e12);
  const VectorXd b = s.d.b_level.col(0);
  Rng rng(16);
  MatrixXd x(n, t_len);
  VectorXd f(t_len);
  double prev = 0.0;
  for (int t = 0; t < t_len; ++t) {
    prev = 0.2 + 0.7 * prev + std::sqrt(0.6) * rng.normal();
    f[t] = prev;
    x.col(t) = b * prev;
  }
  s.panel = make_panel(x, std::vector<TCode>(n, TCode::None), {}, {}, false);
  const PgasModel model(s.panel, s.d);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = (x.transpose() * b / b.squaredNorm());
  for (int sweep = 0; sweep < 20; ++sweep) {
    ref = pgas_draw(model, ref, 50, rng);
    // Periods before first_obs() carry no observation.
    const int k = model.first_obs();
    EXPECT_LT((ref.path.col(0) - f).tail(t_len - k).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(PgasDraw, TwoParticlesFromPosteriorMode) {
  const SmallModel s = linear_model(3, 25, 17);
  const lt::GaussianMoments exact = lt::dense_smoother(to_linear(s));
  const PgasModel model(s.panel, s.d);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = exact.mean;
  Rng rng(18);
  PgasTrace trace;
  const FactorPath out = pgas_draw(model, ref, 2, rng, &trace);
  EXPECT_TRUE(out.path.allFinite());
  EXPECT_EQ(out.path.rows(), 25);
  EXPECT_EQ(trace.reference_states, ref.path);
  EXPECT_LT((trace.weight_sums.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(PgasDraw, IteratedSweepsMatchKalmanMoments) {
  const SmallModel s = linear_model(3, 12, 19);
  const lt::GaussianMoments exact = lt::dense_smoother(to_linear(s));
  const PgasModel model(s.panel, s.d);
  FactorPath ref;
  ref.n_level = 1;
  ref.path = MatrixXd::Zero(12, 1);
  Rng rng(20);
  for (int k = 0; k < 100; ++k) ref = pgas_draw(model, ref, 20, rng);
  const int sweeps = 2000;
  MatrixXd draws(sweeps, 12);
  for (int k = 0; k < sweeps; ++k) {
    ref = pgas_draw(model, ref, 20, rng);
    draws.row(k) = ref.path.col(0).transpose();
  }
  for (int t = 0; t < 12; ++t) {
    const VectorXd col = draws.col(t);
    EXPECT_LT(std::abs(col.mean() - exact.mean(t, 0)), 3.0 * lt::mcmc_se(col)) << "t=" << t;
    const double var = (col.array() - col.mean()).square().mean();
    EXPECT_NEAR(var, exact.var(t, 0), 0.15 * exact.var(t, 0)) << "t=" << t;
  }
}
