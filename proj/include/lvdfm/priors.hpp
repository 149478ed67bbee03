#pragma once

#include "lvdfm/model.hpp"

namespace lvdfm {

struct PriorSet {
  // Prior moments for Gamma implied by the dummy observations (variance
  // evaluated at the AR(1) residual variances).
  MatrixXd gamma_mean;
  MatrixXd gamma_var;
  double a_mean = 0.0;
  double a_var = 10.0;
  double h_scale = 0.1;
  double h_dof = 3.0;
  MatrixXd bload_mean;  // N x J
  double bload_var = 1.0;
  MatrixXd volload_mean;  // N x k
  double volload_var = 1.0;
  double rho_mean = 0.0;
  double rho_var = 1.0;
  double nu0 = 20.0;
  MatrixXd dummy_y;  // T_d x m
  MatrixXd dummy_x;  // T_d x (m L + 1)

  void check() const;
};

struct PcaResult {
  MatrixXd factors;   // T x n_comp
  MatrixXd loadings;  // N x n_comp
  VectorXd singular_values;
};

// Principal components of an N x T panel (each series demeaned over time).
// loadings * factors' is the best rank-n_comp approximation of the demeaned
// data; factors have unit mean square and each loading column sums positive.
PcaResult pca_extract(const MatrixXd& data, int n_comp);

// Centered moving average of log(residual^2 + offset), truncated at the edges.
MatrixXd init_idio_logvol(const MatrixXd& residuals, int window, double offset = 1e-6);

struct Ar1Fit {
  VectorXd coef;   // own first-lag coefficient per column
  VectorXd sigma;  // residual standard deviation per column
};

// Per-column AR(1) regressions with intercept.
Ar1Fit ar1_fit(const MatrixXd& factor_data);

struct DummyObs {
  MatrixXd y;
  MatrixXd x;
};

// Minnesota dummy observations for a VAR with `lags` lags and an intercept
// in the last regressor column. Own first-lag prior means are `ar1_coef`.
DummyObs minnesota_dummies(const Eigen::Ref<const VectorXd>& ar1_coef, int lags, double tau,
                           double intercept_tightness, const Eigen::Ref<const VectorXd>& ar1_sigmas);
// Own first-lag means from AR(1) fits on factor_data.
DummyObs minnesota_dummies_from_data(const MatrixXd& factor_data, int lags, double tau,
                                     double intercept_tightness, const Eigen::Ref<const VectorXd>& ar1_sigmas);

// Posterior mean of the VAR coefficients from stacked (data, dummy) observations.
MatrixXd stacked_least_squares(const MatrixXd& y, const MatrixXd& x);

struct InitialState {
  PriorSet priors;
  ParamDraw draw;
  FactorPath path;
};

InitialState build_priorset(const Panel& panel, const ModelConfig& config);

}  // namespace lvdfm
