#pragma once

#include <string>
#include <vector>

#include "lvdfm/gibbs.hpp"

namespace lvdfm {

// Regional grouping for the world / advanced / emerging model: three level and
// three volatility factors ordered (world, AE, EMDE).
struct GroupMask {
  std::vector<bool> advanced;  // per series: true = AE, false = EMDE

  int n_series() const { return static_cast<int>(advanced.size()); }
  Mask level_mask() const;  // N x 3
  Mask vol_mask() const;    // N x 3
  // World anchor = first series; regional anchors = first other series of the
  // group, or -1 when the group has no such series.
  std::vector<int> anchors() const;
  // Sets n_level = n_vol = 3, masks and anchors.
  void configure(ModelConfig& config) const;
};

ParamDraw apply_group_mask(const ParamDraw& draw, const GroupMask& mask);

std::vector<std::string> default_shock_names(int n_level, int n_vol);

struct FevdDecomposition {
  MatrixXd shares;    // h x m, cumulative shares over factor shocks (rows sum to 1)
  VectorXd residual;  // h, idiosyncratic share of the cumulative forecast-error variance
};

struct FevdOptions {
  int horizon = 8;
  int n_sims = 500;
  int n_origins = 8;
  int max_draws = 100;      // stored draws used, evenly spaced
  std::vector<int> ordering;  // shock ordering for the orthogonalization; empty = factor order
  std::uint64_t seed = 1;
};

// Orthogonalized impact matrix: column j is the response of F to a one
// standard deviation structural shock j under the given ordering.
MatrixXd impact_matrix(const ParamDraw& draw, const std::vector<int>& ordering);

// Paired-simulation decomposition for series i from origin t (the last period
// used as conditioning state).
FevdDecomposition fevd_shares(const ParamDraw& draw, const FactorPath& path, const Panel& panel, int series,
                              int origin, int horizon, int n_sims, const std::vector<int>& ordering,
                              std::uint64_t seed);

// Closed-form cumulative FEVD of y_t = c' F_t for a linear VAR with the given
// impact matrix.
MatrixXd linear_fevd(const MatrixXd& gamma, const MatrixXd& impact, const Eigen::Ref<const VectorXd>& coef,
                     int horizon);

struct FevdResult {
  std::vector<std::string> series;
  std::vector<std::string> shocks;
  std::vector<MatrixXd> median;   // per series: h x m posterior medians
  std::vector<VectorXd> residual; // per series: h posterior medians
};

// Shares averaged over evenly spaced origins, then posterior medians across draws.
FevdResult fevd_chain(const Chain& chain, const Panel& panel, const std::vector<int>& series,
                      const FevdOptions& opts);

std::string to_csv(const FevdResult& result);

}  // namespace lvdfm
