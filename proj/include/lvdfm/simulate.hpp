#pragma once

#include <string>

#include "lvdfm/model.hpp"

namespace lvdfm {

struct DgpSpec {
  int n_series = 100;
  int n_level = 1;
  int n_vol = 1;
  int t_total = 600;
  int t_burn = 100;
  MatrixXd phi;        // m x m VAR(1) matrix for F_t = (f_t', F_t')'
  MatrixXd sigma;      // m x m innovation covariance
  VectorXd intercept;  // m; zero when empty
  double rho_lo = 0.1;
  double rho_hi = 0.7;
  int nu_lo = 10;
  int nu_hi = 30;
  std::string loading_law = "normal";  // "normal" or "fixed"
  double loading_scale = 1.0;
  bool identity_blocks = true;

  int n_factors() const { return n_level + n_vol; }
  void validate() const;
};

struct GroundTruth {
  FactorPath factors;
  MatrixXd b_level;  // N x J
  MatrixXd b_vol;    // N x k
  MatrixXd rho;      // N x 1
  VectorXd nu;
  MatrixXd lambda;   // N x T
  MatrixXd r;        // N x T
  MatrixXd gamma;    // VAR(1) coefficients in ParamDraw layout
  MatrixXd omega;

  // The true parameters as a ParamDraw (A and H from the LDL factor of Omega).
  ParamDraw params() const;
};

struct Simulation {
  Panel panel;
  GroundTruth truth;
};

// N = 100, J = k = 1, T = 600 with 100 burn-in, persistent factor VAR with
// correlated innovations.
DgpSpec default_dgp();

Simulation simulate_panel(const DgpSpec& spec, std::uint64_t seed);

// Quarterly period label `offset` quarters after 1900Q1.
std::string quarter_label(int offset, int start_year = 1900);

// Factor A from Omega = A^{-1} H A^{-1}' with A unit lower triangular.
void ldl_factor(const MatrixXd& omega, MatrixXd& a_mat, VectorXd& h_diag);

}  // namespace lvdfm
