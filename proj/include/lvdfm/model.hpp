#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lvdfm/random.hpp"

namespace lvdfm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Volatility exponents beyond this bound are treated as divergent.
inline constexpr double kMaxLogVolatility = 30.0;

enum class TCode { None, Diff, LogDiff, LogDiff2 };

TCode parse_tcode(const std::string& s);
std::string to_string(TCode code);

struct ModelConfig {
  int n_series = 0;
  int n_level = 1;  // J
  int n_vol = 1;    // k
  int lag_factor = 1;
  int lag_idio = 1;
  double minnesota_tau = 0.1;
  double intercept_tightness = 1000.0;
  double nu0 = 20.0;
  int n_particles = 100;
  int n_draws = 3000;  // total iterations, burn-in included
  int n_burn = 1000;
  int thin = 1;
  double mh_step_volload = 0.1;
  double mh_step_nu = 0.3;
  std::uint64_t seed = 1;

  // Weak priors for blocks whose hyperparameters are not pinned down by the model.
  double rho_prior_var = 1.0;
  double a_prior_var = 10.0;
  double h_prior_scale = 0.1;
  double h_prior_dof = 3.0;
  double loading_prior_var = 1.0;
  int logvol_window = 9;
  double logvol_offset = 1e-6;

  int stationarity_retries = 100;
  int adapt_window = 50;

  // Anchor series: row level_anchors[j] of B is the unit vector e_j (and
  // likewise for the volatility loadings). Empty means the first J (k) series.
  // An anchor of -1 leaves the column unanchored (e.g. a factor masked out of every series).
  std::vector<int> level_anchors;
  std::vector<int> vol_anchors;
  // Optional sparsity patterns (true = free coordinate), N x J and N x k.
  Mask level_mask;
  Mask vol_mask;

  int n_factors() const { return n_level + n_vol; }
  int presample() const { return std::max(lag_factor, lag_idio); }
  int n_stored() const { return (n_draws - n_burn + thin - 1) / thin; }
  std::vector<int> resolved_level_anchors() const;
  std::vector<int> resolved_vol_anchors() const;
  bool level_free(int i, int j) const;
  bool vol_free(int i, int j) const;
  void validate() const;
};

struct Panel {
  MatrixXd data;  // N x T, transformed and standardized
  std::vector<TCode> tcodes;
  VectorXd means;
  VectorXd stds;
  std::vector<std::string> labels;
  std::vector<std::string> dates;
  bool standardized = true;

  int n_series() const { return static_cast<int>(data.rows()); }
  int n_periods() const { return static_cast<int>(data.cols()); }
  // Transformed data on the original (pre-standardization) scale.
  MatrixXd raw() const;
  // First `n` periods; a standardized panel is re-standardized with statistics
  // from those periods only.
  Panel head(int n) const;
  void validate() const;
};

// Builds a standardized panel from transformed data (N x T).
Panel make_panel(const MatrixXd& transformed, std::vector<TCode> tcodes,
                 std::vector<std::string> labels, std::vector<std::string> dates,
                 bool standardize = true);

struct ParamDraw {
  MatrixXd gamma;   // (m * L^F + 1) x m: lag blocks beta_1..beta_L (transposed), intercept last
  MatrixXd a_mat;   // m x m, unit lower triangular
  VectorXd h_diag;  // m
  MatrixXd b_level; // N x J
  MatrixXd b_vol;   // N x k
  MatrixXd rho;     // N x L^v
  MatrixXd lambda;  // N x T
  VectorXd nu;      // N

  int n_factors() const { return static_cast<int>(gamma.cols()); }
  int n_lags() const { return static_cast<int>((gamma.rows() - 1) / gamma.cols()); }
  VectorXd intercept() const { return gamma.row(gamma.rows() - 1).transpose(); }
  // beta_j with F_t = c + sum_j beta_j F_{t-j} + e_t; j is 1-based.
  MatrixXd beta(int j) const;
  MatrixXd omega() const;
  // Throws if a type invariant is violated.
  void check() const;
};

struct FactorPath {
  MatrixXd path;  // T x (J + k)
  int n_level = 0;

  int n_periods() const { return static_cast<int>(path.rows()); }
  int n_vol() const { return static_cast<int>(path.cols()) - n_level; }
  auto level() const { return path.leftCols(n_level); }
  auto vol() const { return path.rightCols(n_vol()); }
};

// r_it = exp(b_vol_i . F_t) / lambda_it.
double idio_variance(const Eigen::Ref<const VectorXd>& b_vol_i,
                     const Eigen::Ref<const VectorXd>& volfactors_t, double lambda_it);

// y_t = x_t - sum_l rho_l x_{t-l} for t = L..T-1 (length T - L).
VectorXd quasi_difference(const Eigen::Ref<const VectorXd>& series,
                          const Eigen::Ref<const VectorXd>& rho);

// Quasi-differenced panel aligned with the original time index: column t holds
// X_t - sum_l rho_il X_{t-l} for t >= L^v and zero before.
MatrixXd quasi_difference_panel(const MatrixXd& data, const MatrixXd& rho);

// Observation log-likelihood at time t. level_history holds f_t, f_{t-1}, ...,
// f_{t-L^v} as columns (J x (L^v + 1)); the quasi-differenced mean of series i
// is B_i (f_t - sum_l rho_il f_{t-l}).
double obs_loglik(const Eigen::Ref<const VectorXd>& x_qd_t,
                  const Eigen::Ref<const MatrixXd>& level_history, const ParamDraw& params,
                  const Eigen::Ref<const VectorXd>& volfactors_t, int t);

// Sum of Gaussian log densities with log-variances logvar; returns -inf for
// non-finite or out-of-range log-variances.
double gaussian_loglik(const Eigen::Ref<const VectorXd>& resid,
                       const Eigen::Ref<const VectorXd>& logvar);

// VAR regressor matrix with zero presample: row t = (F_{t-1}', ..., F_{t-L}', 1).
MatrixXd var_regressors(const MatrixXd& factors, int lags);

// Spectral radius of the VAR companion matrix implied by gamma.
double companion_radius(const MatrixXd& gamma);
// Spectral radius of the AR companion matrix for coefficients rho.
double ar_radius(const Eigen::Ref<const VectorXd>& rho);

// Draw from N(mean, precision^{-1}) given the precision matrix.
VectorXd draw_from_precision(const MatrixXd& precision, const VectorXd& rhs_mean_times_prec,
                             Rng& rng);

}  // namespace lvdfm
