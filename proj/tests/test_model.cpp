#include <cmath>

#include <gtest/gtest.h>

#include "lvdfm/model.hpp"

using namespace lvdfm;

namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

ParamDraw small_draw(int n, int jl, int kv, int t_len, Rng& rng) {
  const int m = jl + kv;
  ParamDraw d;
  d.gamma = MatrixXd::Zero(m + 1, m);
  d.gamma.topRows(m).diagonal().setConstant(0.5);
  d.a_mat = MatrixXd::Identity(m, m);
  for (int i = 1; i < m; ++i)
    for (int j = 0; j < i; ++j) d.a_mat(i, j) = 0.3 * rng.normal();
  d.h_diag = (rng.normal_vector(m).array().abs() + 0.1).matrix();
  d.b_level = MatrixXd::Random(n, jl);
  d.b_vol = 0.3 * MatrixXd::Random(n, kv);
  d.rho = 0.3 * MatrixXd::Random(n, 1);
  d.lambda = (MatrixXd::Random(n, t_len).array().abs() + 0.5).matrix();
  d.nu = VectorXd::Constant(n, 12.0);
  return d;
}

}  // namespace

TEST(IdioVariance, ZeroLoadingGivesOne) {
  EXPECT_DOUBLE_EQ(idio_variance(VectorXd::Zero(1), VectorXd::Constant(1, 3.7), 1.0), 1.0);
}

TEST(IdioVariance, UnitLoadingOnLogFour) {
  EXPECT_NEAR(idio_variance(VectorXd::Ones(1), VectorXd::Constant(1, std::log(4.0)), 2.0), 2.0, 1e-14);
}

TEST(IdioVariance, MatchesScalarArithmetic) {
  EXPECT_NEAR(idio_variance(VectorXd::Constant(1, 0.5), VectorXd::Constant(1, 1.2), 1.5), std::exp(0.6) / 1.5,
              1e-15);
}

TEST(IdioVariance, OverflowAndBadLambda) {
  EXPECT_THROW(idio_variance(VectorXd::Constant(1, 100.0), VectorXd::Ones(1), 1.0), Error);
  EXPECT_THROW(idio_variance(VectorXd::Ones(1), VectorXd::Ones(1), 0.0), Error);
}

TEST(IdioVariance, MonotoneInFactorAndLambda) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    VectorXd b = rng.normal_vector(2).cwiseAbs();
    VectorXd f = rng.normal_vector(2);
    const double lam = 0.5 + rng.uniform();
    const double base = idio_variance(b, f, lam);
    VectorXd f2 = f;
    f2[k % 2] += 0.1;
    EXPECT_GE(idio_variance(b, f2, lam), base);
    EXPECT_LT(idio_variance(b, f, lam + 0.1), base);
  }
}

TEST(QuasiDifference, ZeroRhoTrims) {
  VectorXd x(5);
  x << 1, 2, 3, 4, 5;
  const VectorXd y = quasi_difference(x, VectorXd::Zero(2));
  ASSERT_EQ(y.size(), 3);
  EXPECT_EQ(y, x.tail(3));
}

TEST(QuasiDifference, ConstantFirstDifference) {
  const VectorXd y = quasi_difference(VectorXd::Ones(4), VectorXd::Ones(1));
  ASSERT_EQ(y.size(), 3);
  EXPECT_EQ(y, VectorXd::Zero(3));
}

TEST(QuasiDifference, MatchesLoop) {
  Rng rng(5);
  const VectorXd x = rng.normal_vector(10);
  VectorXd rho(2);
  rho << 0.5, -0.2;
  const VectorXd y = quasi_difference(x, rho);
  for (int t = 2; t < 10; ++t) EXPECT_NEAR(y[t - 2], x[t] - 0.5 * x[t - 1] + 0.2 * x[t - 2], 1e-14);
}

TEST(QuasiDifference, TooShort) { EXPECT_THROW(quasi_difference(VectorXd::Ones(2), VectorXd::Ones(2)), Error); }

TEST(QuasiDifference, Linear) {
  Rng rng(6);
  const VectorXd x = rng.normal_vector(12), z = rng.normal_vector(12), rho = rng.normal_vector(3);
  const VectorXd lhs = quasi_difference(2.5 * x - 0.7 * z, rho);
  const VectorXd rhs = 2.5 * quasi_difference(x, rho) - 0.7 * quasi_difference(z, rho);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(QuasiDifference, PanelAlignsWithSeries) {
  Rng rng(7);
  const MatrixXd x = MatrixXd::Random(3, 9);
  const MatrixXd rho = MatrixXd::Random(3, 2);
  const MatrixXd qd = quasi_difference_panel(x, rho);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(qd.row(i).head(2).norm(), 0.0);
    const VectorXd y = quasi_difference(x.row(i).transpose(), rho.row(i).transpose());
    EXPECT_LT((qd.row(i).tail(7).transpose() - y).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ObsLoglik, ZeroResidualSingleSeries) {
  ParamDraw d;
  d.b_level = MatrixXd::Constant(1, 1, 2.0);
  d.b_vol = MatrixXd::Zero(1, 1);
  d.rho = MatrixXd::Zero(1, 1);
  d.lambda = MatrixXd::Ones(1, 3);
  MatrixXd hist(1, 2);
  hist << 0.7, 0.1;
  EXPECT_NEAR(obs_loglik(VectorXd::Constant(1, 1.4), hist, d, VectorXd::Zero(1), 1), -0.5 * kLog2Pi, 1e-14);
}

TEST(ObsLoglik, UnitResidualsClosedForm) {
  ParamDraw d;
  d.b_level = MatrixXd::Zero(2, 1);
  d.b_vol = MatrixXd::Zero(2, 1);
  d.rho = MatrixXd::Zero(2, 1);
  d.lambda = MatrixXd::Ones(2, 2);
  EXPECT_NEAR(obs_loglik(VectorXd::Ones(2), MatrixXd::Zero(1, 2), d, VectorXd::Zero(1), 0), -kLog2Pi - 1.0, 1e-14);
}

TEST(ObsLoglik, MatchesScalarDensities) {
  Rng rng(8);
  const int n = 4, t_len = 6;
  const ParamDraw d = small_draw(n, 2, 1, t_len, rng);
  const VectorXd x = rng.normal_vector(n);
  const MatrixXd hist = MatrixXd::Random(2, 2);
  const VectorXd vol = rng.normal_vector(1);
  const int t = 3;
  double expect = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mean = d.b_level.row(i).dot(hist.col(0)) - d.rho(i, 0) * d.b_level.row(i).dot(hist.col(1));
    const double r = std::exp(d.b_vol(i, 0) * vol[0]) / d.lambda(i, t);
    expect += -0.5 * std::log(2 * M_PI * r) - 0.5 * (x[i] - mean) * (x[i] - mean) / r;
  }
  EXPECT_NEAR(obs_loglik(x, hist, d, vol, t), expect, 1e-12);
}

TEST(ParamDraw, OmegaSymmetricPositiveDefinite) {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const ParamDraw d = small_draw(3, 2, 2, 4, rng);
    EXPECT_NO_THROW(d.check());
    const MatrixXd om = d.omega();
    EXPECT_LT((om - om.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(om);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(ParamDraw, CheckRejectsViolations) {
  Rng rng(10);
  ParamDraw d = small_draw(3, 1, 1, 4, rng);
  ParamDraw bad = d;
  bad.h_diag[0] = 0.0;
  EXPECT_THROW(bad.check(), Error);
  bad = d;
  bad.a_mat(0, 1) = 0.2;
  EXPECT_THROW(bad.check(), Error);
  bad = d;
  bad.a_mat(1, 1) = 2.0;
  EXPECT_THROW(bad.check(), Error);
  bad = d;
  bad.lambda(0, 0) = -1.0;
  EXPECT_THROW(bad.check(), Error);
  bad = d;
  bad.nu[1] = 0.0;
  EXPECT_THROW(bad.check(), Error);
}

TEST(ParamDraw, BetaAndInterceptLayout) {
  ParamDraw d;
  d.gamma.resize(5, 2);
  d.gamma << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  EXPECT_EQ(d.n_lags(), 2);
  EXPECT_EQ(d.intercept(), Eigen::Vector2d(9, 10));
  MatrixXd b1(2, 2);
  b1 << 1, 3, 2, 4;
  EXPECT_EQ(d.beta(1), b1);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.n_series = 5;
  EXPECT_NO_THROW(c.validate());
  ModelConfig bad = c;
  bad.n_burn = bad.n_draws;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.thin = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.n_level = 0;
  bad.n_vol = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(c.presample(), 1);
  c.n_draws = 10;
  c.n_burn = 5;
  EXPECT_EQ(c.n_stored(), 5);
}

TEST(Panel, StandardizationMetadataReconstructsRaw) {
  Rng rng(11);
  MatrixXd x = MatrixXd::Random(3, 50);
  x.row(1).array() += 4.0;
  const Panel p = make_panel(x, {}, {}, {});
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.data.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(p.data.row(i).squaredNorm() / 50.0, 1.0, 1e-12);
  }
  EXPECT_LT((p.raw() - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Panel, ZeroVarianceRejected) { EXPECT_THROW(make_panel(MatrixXd::Ones(2, 5), {}, {}, {}), Error); }

TEST(Panel, HeadRestandardizesOnPrefix) {
  MatrixXd x = MatrixXd::Random(2, 40);
  const Panel p = make_panel(x, {}, {}, {});
  const Panel h = p.head(20);
  EXPECT_EQ(h.n_periods(), 20);
  EXPECT_NEAR(h.data.row(0).mean(), 0.0, 1e-12);
  EXPECT_LT((h.raw() - x.leftCols(20)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VarRegressors, ZeroPresampleAndIntercept) {
  MatrixXd f(4, 1);
  f << 1, 2, 3, 4;
  const MatrixXd x = var_regressors(f, 2);
  MatrixXd expect(4, 3);
  expect << 0, 0, 1, 1, 0, 1, 2, 1, 1, 3, 2, 1;
  EXPECT_EQ(x, expect);
}

TEST(CompanionRadius, KnownRoots) {
  MatrixXd g(3, 1);
  g << 0.5, 0.06, 0.0;  // roots of z^2 - 0.5 z - 0.06: 0.6, -0.1
  EXPECT_NEAR(companion_radius(g), 0.6, 1e-12);
  VectorXd rho(2);
  rho << 0.5, 0.06;
  EXPECT_NEAR(ar_radius(rho), 0.6, 1e-12);
}

TEST(DrawFromPrecision, Moments) {
  Rng rng(12);
  MatrixXd prec(2, 2);
  prec << 2.0, 0.5, 0.5, 1.0;
  const VectorXd mean(Eigen::Vector2d(1.0, -1.0));
  const VectorXd rhs = prec * mean;
  const int n = 40000;
  VectorXd s = VectorXd::Zero(2);
  MatrixXd ss = MatrixXd::Zero(2, 2);
  for (int k = 0; k < n; ++k) {
    const VectorXd x = draw_from_precision(prec, rhs, rng);
    s += x;
    ss += (x - mean) * (x - mean).transpose();
  }
  EXPECT_LT((s / n - mean).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((ss / n - prec.inverse()).cwiseAbs().maxCoeff(), 0.02);
}

TEST(TCode, ParseAndPrint) {
  EXPECT_EQ(parse_tcode("5"), TCode::LogDiff);
  EXPECT_EQ(parse_tcode("2"), TCode::Diff);
  EXPECT_EQ(parse_tcode("6"), TCode::LogDiff2);
  EXPECT_EQ(parse_tcode("none"), TCode::None);
  EXPECT_EQ(parse_tcode(to_string(TCode::LogDiff2)), TCode::LogDiff2);
  EXPECT_THROW(parse_tcode("9"), Error);
}
