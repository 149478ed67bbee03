#pragma once

#include <vector>

#include "lvdfm/gibbs.hpp"
#include "lvdfm/model.hpp"

namespace lvdfm {

struct BenchmarkDraw {
  MatrixXd gamma;      // (J L + 1) x J
  MatrixXd a_mat;
  VectorXd h_diag;
  MatrixXd b_level;    // N x J
  MatrixXd rho;        // N x L
  MatrixXd log_omega;  // N x T
  VectorXd q;          // N

  MatrixXd omega() const;
  void check() const;
};

struct BenchmarkConfig {
  double q_prior_scale = 0.01;
  double q_prior_dof = 3.0;
  double sv_step = 0.2;
  double logvol_init_var = 10.0;  // prior variance of log omega at t = 0
  bool stochastic_volatility = true;  // false fixes omega at 1
};

struct BenchmarkChain {
  ModelConfig config;  // n_vol is 0
  BenchmarkConfig bench;
  std::vector<BenchmarkDraw> draws;
  std::vector<FactorPath> paths;
  VectorXd sv_acceptance;  // post-burn single-site acceptance rate per series
  VectorXd sv_step;
  int var_stationarity_failures = 0;
  int rho_stationarity_failures = 0;
};

struct LogVolDraw {
  VectorXd path;
  int accepted = 0;
};

// One sweep of single-site random-walk Metropolis over log omega_t, targeting
// prod_{t >= first} N(eps_t; 0, exp(h_t)) times the random-walk prior
// h_t = h_{t-1} + eta_t, eta_t ~ N(0, q), h_0 ~ N(0, init_var).
LogVolDraw draw_logvol_rw(const Eigen::Ref<const VectorXd>& eps, const VectorXd& current, double q,
                          double step, int first, double init_var, Rng& rng);

// Log target of the single-site update at position t.
double logvol_site_target(const Eigen::Ref<const VectorXd>& eps, const VectorXd& path, int t,
                          double value, double q, int first, double init_var);

BenchmarkChain estimate_benchmark(const Panel& panel, const ModelConfig& config,
                                  const BenchmarkConfig& bench = {},
                                  const ProgressFn& progress = {});

}  // namespace lvdfm
