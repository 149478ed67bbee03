#pragma once

#include <string>
#include <vector>

#include "lvdfm/forecast.hpp"

namespace lvdfm {

// Empirical-distribution CRPS, O(M log M).
double crps_sample(const Eigen::Ref<const VectorXd>& draws, double y);
// Reference double-sum form, O(M^2).
double crps_double_sum(const Eigen::Ref<const VectorXd>& draws, double y);

struct TailWeight {
  enum Kind { Full, Left, Right, Band } kind = Full;
  double lo = 0.0;  // Left: threshold; Band: lower bound
  double hi = 0.0;  // Right: threshold; Band: upper bound

  static TailWeight full() { return {Full, 0.0, 0.0}; }
  static TailWeight left(double t) { return {Left, t, 0.0}; }
  static TailWeight right(double t) { return {Right, 0.0, t}; }
  static TailWeight band(double a, double b) { return {Band, a, b}; }
};

// Integral of w(z) (F_M(z) - 1{y <= z})^2 over the real line, evaluated exactly.
double twcrps_sample(const Eigen::Ref<const VectorXd>& draws, double y, const TailWeight& weight);

double rmse(const Eigen::Ref<const VectorXd>& forecasts, const Eigen::Ref<const VectorXd>& realized);

struct DmResult {
  double stat = 0.0;
  double p = 1.0;  // one-sided: small when loss_b is smaller than loss_a
  bool lag0_fallback = false;
};

// Diebold-Mariano test on d = loss_a - loss_b with a Newey-West long-run
// variance (Bartlett, lag h-1) and the Harvey small-sample factor.
DmResult dm_test(const Eigen::Ref<const VectorXd>& loss_a, const Eigen::Ref<const VectorXd>& loss_b,
                 int h);

double pinball_loss(const Eigen::Ref<const VectorXd>& resid, double q);
double quantile_score(double quantile_forecast, double y, double q);

// Minimizes sum rho_q(y - X b).
VectorXd fit_quantile_reg(const Eigen::Ref<const VectorXd>& y, const MatrixXd& x, double q);

// Type-7 sample quantile.
double empirical_quantile(VectorXd values, double q);

struct QrSpec {
  std::vector<double> levels{0.05, 0.95};
  int lags = 1;
  MatrixXd predictors;  // optional T x p extra regressors, aligned with the series

  void validate() const;
};

// Direct h-step quantile forecasts of the target construct over [o, o + h) from
// regressions on information up to o - 1. Result: |origins| x |levels|.
MatrixXd qr_tail_quantiles(const Eigen::Ref<const VectorXd>& raw_series, TCode code, const QrSpec& spec,
                           const std::vector<int>& origins, int h);

struct ScoreRow {
  std::string model;
  std::string target;
  int horizon = 0;
  std::string metric;
  double value = 0.0;
  double ratio = 1.0;
  double dm_stat = 0.0;  // NaN when not applicable
  double p = 0.0;        // NaN when not applicable
};

struct ScoreOptions {
  double left_quantile = 0.10;
  double right_quantile = 0.90;
  std::vector<double> left_grid;   // quantile-score grid; default 0.01..0.10
  std::vector<double> right_grid;  // default 0.90..0.99
  bool with_qr = true;
  QrSpec qr;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  const ScoreRow* find(const std::string& model, const std::string& target, int horizon,
                       const std::string& metric) const;
};

// Scores forecast runs against realized values. `benchmark` indexes the run
// that ratios and DM tests are computed against.
ScoreTable score_runs(const std::vector<ForecastRun>& runs, int benchmark, const Panel& panel,
                      const ScoreOptions& opts = {});

std::string to_csv(const ScoreTable& table);

}  // namespace lvdfm
