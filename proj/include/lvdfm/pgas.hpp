#pragma once

#include <vector>

#include "lvdfm/model.hpp"

namespace lvdfm {

// Precomputed pieces of the conditional state-space model used by the
// particle sampler: quasi-differenced data, transition moments, and the
// observation density.
class PgasModel {
 public:
  PgasModel(const Panel& panel, const ParamDraw& params);

  int n_periods() const { return n_periods_; }
  int n_factors() const { return n_factors_; }
  int n_level() const { return n_level_; }
  int lag_factor() const { return lag_factor_; }
  int lag_idio() const { return lag_idio_; }
  int first_obs() const { return first_obs_; }
  // Number of F states carried by each particle: F_t, F_{t-1}, ..., F_{t-window+1}.
  int window() const { return window_; }
  const MatrixXd& omega_chol() const { return omega_chol_; }

  // lags: m x L^F with column l-1 = F_{t-l}.
  VectorXd transition_mean(const Eigen::Ref<const MatrixXd>& lags) const;
  double transition_logdensity(const Eigen::Ref<const VectorXd>& state,
                               const Eigen::Ref<const MatrixXd>& lags) const;
  // level_history: J x (L^v + 1) with column l = f_{t-l}. Zero before first_obs().
  double observation_loglik(int t, const Eigen::Ref<const MatrixXd>& level_history,
                            const Eigen::Ref<const VectorXd>& vol_t) const;

 private:
  int n_periods_, n_factors_, n_level_, lag_factor_, lag_idio_, first_obs_, window_;
  MatrixXd x_qd_;        // N x T
  MatrixXd log_lambda_;  // N x T
  MatrixXd b_level_, b_vol_, rho_;
  MatrixXd gamma_t_;     // m x (m L^F + 1)
  MatrixXd omega_chol_;  // lower Cholesky factor of Omega
  double log_norm_ = 0.0;
  mutable MatrixXd bf_scratch_;
};

// Unnormalized log ancestor weights for the reference trajectory at time t >= 1.
// prev_windows: (m * window) x P, column i stacks F_{t-1}, F_{t-2}, ... of
// particle i. The result adds, to each filter log-weight, every transition and
// observation term of the reference future whose lag history reaches into the
// candidate's past.
VectorXd ancestor_logweights(const PgasModel& model, int t, const MatrixXd& prev_windows,
                             const MatrixXd& reference, const VectorXd& filter_logw);

struct PgasTrace {
  // Reference particle state at each t, and the sum of normalized weights.
  MatrixXd reference_states;
  VectorXd weight_sums;
};

// One conditional SMC sweep with ancestor sampling; returns a new trajectory.
FactorPath pgas_draw(const PgasModel& model, const FactorPath& reference, int n_particles, Rng& rng,
                     PgasTrace* trace = nullptr);
FactorPath pgas_draw(const Panel& panel, const ParamDraw& params, const FactorPath& reference,
                     int n_particles, std::uint64_t seed);

}  // namespace lvdfm
