#pragma once

#include "lvdfm/model.hpp"

namespace lvdfm {

// Linear-Gaussian factor model in quasi-differenced form:
//   x_qd_it = B_i (f_t - sum_l rho_il f_{t-l}) + eps_it,  eps_it ~ N(0, r_it), t >= first_obs
//   F_t = c + sum_j beta_j F_{t-j} + e_t,  e_t ~ N(0, Omega), zero presample.
// The observations load on the first J = b_level.cols() coordinates of F.
struct LinearStateSpace {
  MatrixXd gamma;    // (m L^F + 1) x m
  MatrixXd omega;    // m x m
  MatrixXd b_level;  // N x J
  MatrixXd rho;      // N x L^v
  MatrixXd r;        // N x T
  MatrixXd x_qd;     // N x T
  int first_obs = 0;

  int n_factors() const { return static_cast<int>(gamma.cols()); }
  int n_periods() const { return static_cast<int>(x_qd.cols()); }
};

// Forward filter, backward sampler. Returns one T x m draw of F from the
// smoothing distribution.
MatrixXd ffbs_draw(const LinearStateSpace& model, Rng& rng);

// Symmetric square root S with S S' = cov for a positive semidefinite cov.
MatrixXd psd_sqrt(const MatrixXd& cov);

// Draw from N(mean, cov) for a positive semidefinite cov.
VectorXd draw_psd(const VectorXd& mean, const MatrixXd& cov, Rng& rng);

}  // namespace lvdfm
