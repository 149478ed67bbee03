#include <cmath>

#include <gtest/gtest.h>

#include "lvdfm/benchmark.hpp"
#include "lvdfm/simulate.hpp"
#include "oracles.hpp"

using namespace lvdfm;

TEST(LogvolSiteTarget, ClosedForm) {
  VectorXd eps(4), path(4);
  eps << 0.5, -1.0, 2.0, 0.1;
  path << 0.1, -0.2, 0.3, 0.0;
  const double q = 0.05, iv = 10.0, v = 0.4;
  const double interior = -0.5 * (v + 4.0 * std::exp(-v)) - 0.5 * (v + 0.2) * (v + 0.2) / q -
                          0.5 * (0.0 - v) * (0.0 - v) / q;
  EXPECT_NEAR(logvol_site_target(eps, path, 2, v, q, 1, iv), interior, 1e-12);
  const double start = -0.5 * v * v / iv - 0.5 * (-0.2 - v) * (-0.2 - v) / q;
  EXPECT_NEAR(logvol_site_target(eps, path, 0, v, q, 1, iv), start, 1e-12);
  const double end = -0.5 * (v + 0.01 * std::exp(-v)) - 0.5 * (v - 0.3) * (v - 0.3) / q;
  EXPECT_NEAR(logvol_site_target(eps, path, 3, v, q, 1, iv), end, 1e-12);
}

TEST(DrawLogvolRw, InvariantForTwoSites) {
  // Posterior mean of (h_0, h_1) on a grid versus the Metropolis chain.
  VectorXd eps(2);
  eps << 1.5, 0.3;
  const double q = 0.3, iv = 2.0;
  auto logp = [&](double a, double b) {
    return -0.5 * a * a / iv - 0.5 * (b - a) * (b - a) / q - 0.5 * (a + eps[0] * eps[0] * std::exp(-a)) -
           0.5 * (b + eps[1] * eps[1] * std::exp(-b));
  };
  double w = 0.0, ma = 0.0, mb = 0.0;
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 500; ++j) {
      const double a = -8.0 + 16.0 * (i + 0.5) / 500, b = -8.0 + 16.0 * (j + 0.5) / 500;
      const double p = std::exp(logp(a, b));
      w += p;
      ma += a * p;
      mb += b * p;
    }
  ma /= w;
  mb /= w;
  Rng rng(1);
  VectorXd cur = VectorXd::Zero(2);
  const int n = 100000;
  VectorXd ta(n), tb(n);
  for (int k = 0; k < 1000 + n; ++k) {
    cur = draw_logvol_rw(eps, cur, q, 0.8, 0, iv, rng).path;
    if (k >= 1000) {
      ta[k - 1000] = cur[0];
      tb[k - 1000] = cur[1];
    }
  }
  EXPECT_LT(std::abs(ta.mean() - ma), 4.0 * lvdfm::testing::mcmc_se(ta));
  EXPECT_LT(std::abs(tb.mean() - mb), 4.0 * lvdfm::testing::mcmc_se(tb));
}

TEST(EstimateBenchmark, ShapesInvariantsDeterminism) {
  DgpSpec spec = default_dgp();
  spec.n_series = 8;
  spec.t_total = 150;
  spec.t_burn = 50;
  const Simulation sim = simulate_panel(spec, 3);
  ModelConfig c;
  c.n_series = 8;
  c.n_level = 1;
  c.n_vol = 0;
  c.n_draws = 12;
  c.n_burn = 4;
  c.thin = 2;
  c.n_particles = 10;
  c.seed = 5;
  const BenchmarkChain a = estimate_benchmark(sim.panel, c);
  ASSERT_EQ(a.draws.size(), 4u);
  ASSERT_EQ(a.paths.size(), 4u);
  for (const auto& d : a.draws) {
    EXPECT_NO_THROW(d.check());
    EXPECT_EQ(d.b_level(0, 0), 1.0);
    EXPECT_EQ(d.log_omega.rows(), 8);
    EXPECT_EQ(d.log_omega.cols(), 100);
    EXPECT_TRUE((d.q.array() > 0.0).all());
    EXPECT_LT(companion_radius(d.gamma), 1.0);
  }
  EXPECT_EQ(a.paths[0].n_vol(), 0);
  EXPECT_EQ(a.sv_acceptance.size(), 8);
  const BenchmarkChain b = estimate_benchmark(sim.panel, c);
  EXPECT_EQ(a.draws.back().log_omega, b.draws.back().log_omega);
  EXPECT_EQ(a.paths.back().path, b.paths.back().path);
}

TEST(DrawLogvolRw, DegenerateInnovationVarianceKeepsPathFlat) {
  Rng rng(4);
  const VectorXd eps = rng.normal_vector(60);
  VectorXd path = VectorXd::Constant(60, 0.3);
  for (int k = 0; k < 500; ++k) path = draw_logvol_rw(eps, path, 1e-10, 0.2, 1, 10.0, rng).path;
  EXPECT_LT((path.array() - path.mean()).square().mean(), 1e-4);
  EXPECT_TRUE(path.allFinite());
}

TEST(DrawLogvolRw, UnitResidualsCentreAtZero) {
  Rng rng(5);
  const VectorXd eps = VectorXd::Ones(100);
  VectorXd path = VectorXd::Constant(100, 1.0);
  double s = 0.0;
  int n = 0;
  for (int k = 0; k < 6000; ++k) {
    path = draw_logvol_rw(eps, path, 0.05, 0.5, 0, 10.0, rng).path;
    if (k >= 1000) {
      s += path.segment(10, 80).mean();
      ++n;
    }
  }
  EXPECT_LT(std::abs(s / n), 0.1);
}

TEST(DrawLogvolRw, ZeroStepAlwaysAccepted) {
  Rng rng(6);
  const VectorXd eps = rng.normal_vector(30);
  const VectorXd path = rng.normal_vector(30);
  const LogVolDraw d = draw_logvol_rw(eps, path, 0.1, 0.0, 1, 10.0, rng);
  EXPECT_EQ(d.accepted, 30);
  EXPECT_EQ(d.path, path);
}

namespace {

// Benchmark DGP: one AR(1) factor, AR(1) idiosyncratic terms with
// random-walk log volatility.
Simulation benchmark_sim(int n, int t_len, std::uint64_t seed) {
  Rng rng(seed);
  Simulation sim;
  sim.truth.factors.n_level = 1;
  sim.truth.factors.path.resize(t_len, 1);
  sim.truth.b_level.resize(n, 1);
  for (int i = 0; i < n; ++i) sim.truth.b_level(i, 0) = i == 0 ? 1.0 : 0.5 + rng.uniform();
  double f = 0.0;
  for (int t = 0; t < t_len; ++t) {
    f = 0.8 * f + std::sqrt(0.5) * rng.normal();
    sim.truth.factors.path(t, 0) = f;
  }
  MatrixXd x(n, t_len);
  for (int i = 0; i < n; ++i) {
    const double rho = 0.1 + 0.4 * rng.uniform();
    double v = 0.0, h = std::log(0.5);
    for (int t = 0; t < t_len; ++t) {
      h += 0.05 * rng.normal();
      v = rho * v + std::exp(0.5 * h) * rng.normal();
      x(i, t) = sim.truth.b_level(i, 0) * sim.truth.factors.path(t, 0) + v;
    }
  }
  sim.panel = make_panel(x, std::vector<TCode>(n, TCode::None), {}, {}, false);
  return sim;
}

ModelConfig bench_config(int n) {
  ModelConfig c;
  c.n_series = n;
  c.n_level = 1;
  c.n_vol = 0;
  c.n_draws = 600;
  c.n_burn = 200;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(EstimateBenchmark, RecoversFactor) {
  const Simulation sim = benchmark_sim(10, 300, 7);
  const BenchmarkChain chain = estimate_benchmark(sim.panel, bench_config(10));
  VectorXd mean = VectorXd::Zero(300);
  for (const auto& p : chain.paths) mean += p.path.col(0);
  mean /= static_cast<double>(chain.paths.size());
  EXPECT_GT(std::abs(lvdfm::testing::correlation(mean, sim.truth.factors.path.col(0))), 0.9);
}

TEST(EstimateBenchmark, HomoskedasticLoadingsMatchConjugateForm) {
  const Simulation sim = benchmark_sim(5, 120, 8);
  ModelConfig c = bench_config(5);
  c.n_draws = 3000;
  c.n_burn = 200;
  BenchmarkConfig b;
  b.stochastic_volatility = false;
  const BenchmarkChain chain = estimate_benchmark(sim.panel, c, b);
  const PriorSet pr = build_priorset(sim.panel, chain.config).priors;
  const int first = c.presample();
  // Each loading draw is conditional on the previous stored path and rho.
  for (int i = 1; i < 5; ++i) {
    double diff = 0.0, cond_var = 0.0;
    const std::size_t n = chain.draws.size() - 1;
    for (std::size_t k = 1; k <= n; ++k) {
      const VectorXd f = chain.paths[k - 1].path.col(0);
      const double rho = chain.draws[k - 1].rho(i, 0);
      double zz = 0.0, zy = 0.0;
      for (int t = first; t < 120; ++t) {
        const double z = f[t] - rho * f[t - 1];
        const double y = sim.panel.data(i, t) - rho * sim.panel.data(i, t - 1);
        zz += z * z;
        zy += z * y;
      }
      const double prec = zz + 1.0 / pr.bload_var;
      diff += chain.draws[k].b_level(i, 0) - (zy + pr.bload_mean(i, 0) / pr.bload_var) / prec;
      cond_var += 1.0 / prec;
      EXPECT_EQ(chain.draws[k].log_omega.cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_LT(std::abs(diff / n), 3.0 * std::sqrt(cond_var / n) / std::sqrt(double(n))) << "series " << i;
  }
}
