#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lvdfm/model.hpp"
#include "lvdfm/priors.hpp"

namespace lvdfm {

// Source of per-(iteration, block, series) random substreams. Every draw that
// may run on a separate worker owns its own stream, so results do not depend
// on scheduling.
struct Streams {
  std::uint64_t seed = 1;
  std::uint64_t iteration = 0;
  Rng at(std::uint64_t block, std::uint64_t index = 0) const {
    return Rng(seed, {iteration, block, index});
  }
};

struct ChainDiagnostics {
  VectorXd volload_acceptance;  // post-burn acceptance rate per series
  VectorXd nu_acceptance;
  VectorXd volload_step;        // step sizes frozen at the end of burn-in
  VectorXd nu_step;
  int var_stationarity_failures = 0;
  int rho_stationarity_failures = 0;
  int iterations = 0;
};

struct Chain {
  ModelConfig config;
  std::vector<ParamDraw> draws;
  std::vector<FactorPath> paths;
  ChainDiagnostics diagnostics;
};

struct ChainState {
  ParamDraw draw;
  FactorPath path;
  PriorSet priors;
  VectorXd volload_step;
  VectorXd nu_step;
  Eigen::VectorXi volload_window_accepts;
  Eigen::VectorXi nu_window_accepts;
  Eigen::VectorXi volload_accepts;  // post-burn totals
  Eigen::VectorXi nu_accepts;
  int iteration = 0;
};

// Step 1: h_k ~ IG(u_k'u_k + h0, T + T0) for the orthogonalized residuals u = e A'.
VectorXd draw_H(const MatrixXd& orthogonal_residuals, const PriorSet& prior, Rng& rng);

// Step 2: free elements of row k of A from the regression e^k = -e^{<k} a_k + u^k.
MatrixXd draw_A(const MatrixXd& var_residuals, const VectorXd& h_diag, const PriorSet& prior,
                Rng& rng);

struct VarDraw {
  MatrixXd gamma;
  bool kept_previous = false;
};

// Step 3: VAR coefficients equation by equation, each from its full conditional
// given A, H and the other equations, on the data stacked with the dummy
// observations. Non-stationary sweeps are redrawn up to `retries` times.
VarDraw draw_var_coeffs(const MatrixXd& factors, const MatrixXd& gamma_current,
                        const MatrixXd& a_mat, const VectorXd& h_diag, const PriorSet& prior,
                        Rng& rng, int retries = 100);

// Quasi-differenced idiosyncratic residuals eps_it = v_it - sum_l rho_il v_{i,t-l},
// v = X - B f'. Columns before L^v are zero.
MatrixXd qd_residuals(const MatrixXd& data, const MatrixXd& level, const MatrixXd& b_level,
                      const MatrixXd& rho);

// Step 4: level loadings by GLS-transformed Bayesian regression. Anchor rows
// are unit vectors and masked coordinates stay zero.
MatrixXd draw_level_loadings(const MatrixXd& data, const MatrixXd& level, const MatrixXd& rho,
                             const MatrixXd& r, const PriorSet& prior, const ModelConfig& config,
                             int first, const Streams& streams);

struct RhoDraw {
  MatrixXd rho;
  int failures = 0;
};

// Step 5: AR coefficients of the idiosyncratic components by GLS regression.
RhoDraw draw_rho(const MatrixXd& idio, const MatrixXd& r, const PriorSet& prior,
                 const MatrixXd& rho_current, int first, const Streams& streams,
                 int retries = 100);

// Log posterior kernel of the volatility loadings of one series.
double volload_log_target(const Eigen::Ref<const VectorXd>& b_vol_i,
                          const Eigen::Ref<const VectorXd>& eps_i, const MatrixXd& vol,
                          const Eigen::Ref<const VectorXd>& lambda_i,
                          const Eigen::Ref<const VectorXd>& prior_mean, double prior_var,
                          int first);

// log of the Metropolis-Hastings acceptance probability for a move from -> to.
double volload_log_acceptance(const Eigen::Ref<const VectorXd>& from, const Eigen::Ref<const VectorXd>& to,
                              const Eigen::Ref<const VectorXd>& eps_i, const MatrixXd& vol,
                              const Eigen::Ref<const VectorXd>& lambda_i,
                              const Eigen::Ref<const VectorXd>& prior_mean, double prior_var, int first);

struct VolLoadDraw {
  MatrixXd b_vol;
  std::vector<bool> accepted;
};

// Step 6: random-walk Metropolis-Hastings on each series' volatility loadings.
VolLoadDraw draw_vol_loadings(const MatrixXd& eps, const MatrixXd& vol, const MatrixXd& b_vol,
                              const MatrixXd& lambda, const PriorSet& prior,
                              const ModelConfig& config, const VectorXd& step, int first,
                              const Streams& streams);

// Step 7: lambda_it ~ Gamma with mean (nu+1)/(eps^2/r~ + nu) and nu+1 degrees of
// freedom for t >= first; prior Gamma(1, nu) draws before.
MatrixXd draw_lambda(const MatrixXd& eps, const MatrixXd& r_tilde, const VectorXd& nu, int first,
                     const Streams& streams);

// log G(nu) for the degrees-of-freedom conditional.
double nu_log_target(const Eigen::Ref<const VectorXd>& lambda_i, double nu, double nu0);

// Acceptance log-probability of the log-scale random walk from -> to.
double nu_log_acceptance(const Eigen::Ref<const VectorXd>& lambda_i, double from, double to, double nu0);

struct NuDraw {
  double nu;
  bool accepted;
};

// Step 8: random walk on log(nu) with the Jacobian correction.
NuDraw draw_nu(const Eigen::Ref<const VectorXd>& lambda_i, double nu_old, double nu0, double step,
               Rng& rng);

ChainState initial_chain_state(const InitialState& init, const ModelConfig& config);

// One full sweep of steps 1-9 in place.
void gibbs_iteration(const Panel& panel, const ModelConfig& config, ChainState& state,
                     ChainDiagnostics& diag);

using ProgressFn = std::function<void(int iteration, int total)>;

Chain run_chain(const Panel& panel, const ModelConfig& config, const InitialState& init,
                const ProgressFn& progress = {});

// build_priorset followed by run_chain.
Chain estimate_lv(const Panel& panel, const ModelConfig& config, const ProgressFn& progress = {});

}  // namespace lvdfm
