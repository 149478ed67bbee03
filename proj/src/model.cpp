#include "lvdfm/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace lvdfm {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
}

TCode parse_tcode(const std::string& s) {
  if (s == "none" || s == "1" || s.empty()) return TCode::None;
  if (s == "2") return TCode::Diff;
  if (s == "5") return TCode::LogDiff;
  if (s == "6") return TCode::LogDiff2;
  throw Error("unknown transformation code '" + s + "'");
}

std::string to_string(TCode code) {
  switch (code) {
    case TCode::None: return "none";
    case TCode::Diff: return "2";
    case TCode::LogDiff: return "5";
    case TCode::LogDiff2: return "6";
  }
  return "none";
}

// ---------------------------------------------------------------------------
// ModelConfig

std::vector<int> ModelConfig::resolved_level_anchors() const {
  if (!level_anchors.empty()) return level_anchors;
  std::vector<int> a(n_level);
  for (int j = 0; j < n_level; ++j) a[j] = j;
  return a;
}

std::vector<int> ModelConfig::resolved_vol_anchors() const {
  if (!vol_anchors.empty()) return vol_anchors;
  std::vector<int> a(n_vol);
  for (int j = 0; j < n_vol; ++j) a[j] = j;
  return a;
}

bool ModelConfig::level_free(int i, int j) const {
  return level_mask.size() == 0 || level_mask(i, j);
}

bool ModelConfig::vol_free(int i, int j) const {
  return vol_mask.size() == 0 || vol_mask(i, j);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid model config: " + what); };
  if (n_series <= 0) fail("n_series must be positive");
  if (n_level < 1) fail("n_level must be positive");
  if (n_vol < 0) fail("n_vol must be nonnegative");
  if (lag_factor < 1) fail("lag_factor must be >= 1");
  if (lag_idio < 1) fail("lag_idio must be >= 1");
  if (!(minnesota_tau > 0.0)) fail("minnesota_tau must be positive");
  if (!(intercept_tightness > 0.0)) fail("intercept_tightness must be positive");
  if (!(nu0 > 0.0)) fail("nu0 must be positive");
  if (n_particles < 2) fail("n_particles must be >= 2");
  if (n_draws < 1 || n_burn < 0 || n_burn >= n_draws) fail("need 0 <= n_burn < n_draws");
  if (thin < 1) fail("thin must be >= 1");
  if (!(mh_step_volload > 0.0) || !(mh_step_nu > 0.0)) fail("MH steps must be positive");
  if (!(rho_prior_var > 0.0) || !(a_prior_var > 0.0) || !(h_prior_scale > 0.0) ||
      !(h_prior_dof > 0.0) || !(loading_prior_var > 0.0))
    fail("prior variances must be positive");
  if (logvol_window < 3 || logvol_window % 2 == 0) fail("logvol_window must be odd and >= 3");
  const auto la = resolved_level_anchors();
  const auto va = resolved_vol_anchors();
  if (static_cast<int>(la.size()) != n_level) fail("level_anchors must have n_level entries");
  if (static_cast<int>(va.size()) != n_vol) fail("vol_anchors must have n_vol entries");
  for (int a : la)
    if (a < -1 || a >= n_series) fail("level anchor out of range");
  for (int a : va)
    if (a < -1 || a >= n_series) fail("vol anchor out of range");
  if (level_mask.size() != 0 && (level_mask.rows() != n_series || level_mask.cols() != n_level))
    fail("level_mask must be n_series x n_level");
  if (vol_mask.size() != 0 && (vol_mask.rows() != n_series || vol_mask.cols() != n_vol))
    fail("vol_mask must be n_series x n_vol");
}

// ---------------------------------------------------------------------------
// Panel

MatrixXd Panel::raw() const {
  MatrixXd out = data;
  for (int i = 0; i < n_series(); ++i) out.row(i) = data.row(i).array() * stds[i] + means[i];
  return out;
}

Panel Panel::head(int n) const {
  if (n < 2 || n > n_periods()) throw Error("panel head: invalid length");
  std::vector<std::string> d(dates.begin(), dates.begin() + std::min<std::size_t>(n, dates.size()));
  return make_panel(raw().leftCols(n), tcodes, labels, std::move(d), standardized);
}

void Panel::validate() const {
  const int n = n_series();
  if (n == 0 || n_periods() == 0) throw Error("panel is empty");
  if (!data.allFinite()) throw Error("panel contains non-finite values");
  if (means.size() != n || stds.size() != n) throw Error("panel standardization metadata mismatch");
  if ((stds.array() <= 0.0).any()) throw Error("panel has nonpositive standard deviations");
  if (static_cast<int>(tcodes.size()) != n || static_cast<int>(labels.size()) != n)
    throw Error("panel metadata length mismatch");
}

Panel make_panel(const MatrixXd& transformed, std::vector<TCode> tcodes,
                 std::vector<std::string> labels, std::vector<std::string> dates,
                 bool standardize) {
  Panel p;
  const auto n = transformed.rows();
  const auto t = transformed.cols();
  if (tcodes.empty()) tcodes.assign(n, TCode::None);
  if (labels.empty())
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back("x" + std::to_string(i + 1));
  p.tcodes = std::move(tcodes);
  p.labels = std::move(labels);
  p.dates = std::move(dates);
  p.standardized = standardize;
  p.means = VectorXd::Zero(n);
  p.stds = VectorXd::Ones(n);
  p.data = transformed;
  if (standardize) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = transformed.row(i).mean();
      const double var = (transformed.row(i).array() - mu).square().sum() / static_cast<double>(t);
      if (!(var > 0.0)) throw Error("series '" + p.labels[i] + "' has zero variance");
      p.means[i] = mu;
      p.stds[i] = std::sqrt(var);
      p.data.row(i) = (transformed.row(i).array() - mu) / p.stds[i];
    }
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// ParamDraw

MatrixXd ParamDraw::beta(int j) const {
  const int m = n_factors();
  return gamma.block((j - 1) * m, 0, m, m).transpose();
}

MatrixXd ParamDraw::omega() const {
  const MatrixXd a_inv =
      a_mat.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(a_mat.rows(), a_mat.cols()));
  return a_inv * h_diag.asDiagonal() * a_inv.transpose();
}

void ParamDraw::check() const {
  const int m = n_factors();
  if (m < 1 || gamma.rows() < m + 1 || (gamma.rows() - 1) % m != 0) throw Error("ParamDraw: gamma has inconsistent shape");
  if (a_mat.rows() != m || a_mat.cols() != m || h_diag.size() != m)
    throw Error("ParamDraw: covariance blocks have inconsistent shape");
  if (!(h_diag.array() > 0.0).all()) throw Error("ParamDraw: h_diag must be strictly positive");
  for (int i = 0; i < m; ++i) {
    if (a_mat(i, i) != 1.0) throw Error("ParamDraw: a_mat must have unit diagonal");
    for (int j = i + 1; j < m; ++j)
      if (a_mat(i, j) != 0.0) throw Error("ParamDraw: a_mat must be lower triangular");
  }
  if (!(lambda.array() > 0.0).all()) throw Error("ParamDraw: lambda must be strictly positive");
  if (!(nu.array() > 0.0).all()) throw Error("ParamDraw: nu must be strictly positive");
  if (!gamma.allFinite() || !b_level.allFinite() || !b_vol.allFinite() || !rho.allFinite() ||
      !lambda.allFinite() || !nu.allFinite() || !a_mat.allFinite())
    throw Error("ParamDraw: non-finite entries");
}

// ---------------------------------------------------------------------------
// Core operations

double idio_variance(const Eigen::Ref<const VectorXd>& b_vol_i,
                     const Eigen::Ref<const VectorXd>& volfactors_t, double lambda_it) {
  if (!(lambda_it > 0.0)) throw Error("idio_variance: lambda must be positive");
  const double expo = b_vol_i.size() == 0 ? 0.0 : b_vol_i.dot(volfactors_t);
  if (!std::isfinite(expo) || std::abs(expo) > kMaxLogVolatility)
    throw Error("volatility overflow");
  return std::exp(expo) / lambda_it;
}

VectorXd quasi_difference(const Eigen::Ref<const VectorXd>& series,
                          const Eigen::Ref<const VectorXd>& rho) {
  const Eigen::Index t_len = series.size();
  const Eigen::Index lags = rho.size();
  if (t_len <= lags) throw Error("series too short");
  VectorXd out = series.tail(t_len - lags);
  for (Eigen::Index l = 1; l <= lags; ++l)
    out -= rho[l - 1] * series.segment(lags - l, t_len - lags);
  return out;
}

MatrixXd quasi_difference_panel(const MatrixXd& data, const MatrixXd& rho) {
  const Eigen::Index lags = rho.cols();
  const Eigen::Index t_len = data.cols();
  if (t_len <= lags) throw Error("series too short");
  MatrixXd out = MatrixXd::Zero(data.rows(), t_len);
  out.rightCols(t_len - lags) = data.rightCols(t_len - lags);
  for (Eigen::Index l = 1; l <= lags; ++l)
    out.rightCols(t_len - lags).array() -=
        data.middleCols(lags - l, t_len - lags).array().colwise() * rho.col(l - 1).array();
  return out;
}

double gaussian_loglik(const Eigen::Ref<const VectorXd>& resid,
                       const Eigen::Ref<const VectorXd>& logvar) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const double lv = logvar[i];
    if (!std::isfinite(lv) || std::abs(lv) > 2.0 * kMaxLogVolatility)
      return -std::numeric_limits<double>::infinity();
    ll -= 0.5 * (kLog2Pi + lv + resid[i] * resid[i] * std::exp(-lv));
  }
  return ll;
}

double obs_loglik(const Eigen::Ref<const VectorXd>& x_qd_t,
                  const Eigen::Ref<const MatrixXd>& level_history, const ParamDraw& params,
                  const Eigen::Ref<const VectorXd>& volfactors_t, int t) {
  const Eigen::Index n = x_qd_t.size();
  const Eigen::Index lags = params.rho.cols();
  if (level_history.cols() < lags + 1) throw Error("obs_loglik: level history too short");
  // B f_{t-l} for l = 0..L^v
  const MatrixXd bf = params.b_level * level_history.leftCols(lags + 1);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = bf(i, 0);
    for (Eigen::Index l = 1; l <= lags; ++l) mean -= params.rho(i, l - 1) * bf(i, l);
    const double r = idio_variance(params.b_vol.row(i).transpose(), volfactors_t, params.lambda(i, t));
    if (!(r > 0.0)) throw Error("obs_loglik: nonpositive variance");
    const double e = x_qd_t[i] - mean;
    ll -= 0.5 * (kLog2Pi + std::log(r) + e * e / r);
  }
  return ll;
}

MatrixXd var_regressors(const MatrixXd& factors, int lags) {
  const Eigen::Index t_len = factors.rows();
  const Eigen::Index m = factors.cols();
  MatrixXd x = MatrixXd::Zero(t_len, m * lags + 1);
  for (int l = 1; l <= lags; ++l)
    if (t_len > l) x.block(l, (l - 1) * m, t_len - l, m) = factors.topRows(t_len - l);
  x.col(m * lags).setOnes();
  return x;
}

double companion_radius(const MatrixXd& gamma) {
  const Eigen::Index m = gamma.cols();
  const Eigen::Index lags = (gamma.rows() - 1) / m;
  const Eigen::Index dim = m * lags;
  MatrixXd comp = MatrixXd::Zero(dim, dim);
  comp.topRows(m) = gamma.topRows(dim).transpose();
  if (lags > 1) comp.bottomLeftCorner(dim - m, dim - m).setIdentity();
  if (dim == 1) return std::abs(comp(0, 0));
  Eigen::EigenSolver<MatrixXd> es(comp, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double ar_radius(const Eigen::Ref<const VectorXd>& rho) {
  const Eigen::Index p = rho.size();
  if (p == 0) return 0.0;
  if (p == 1) return std::abs(rho[0]);
  MatrixXd comp = MatrixXd::Zero(p, p);
  comp.row(0) = rho.transpose();
  comp.bottomLeftCorner(p - 1, p - 1).setIdentity();
  Eigen::EigenSolver<MatrixXd> es(comp, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

VectorXd draw_from_precision(const MatrixXd& precision, const VectorXd& rhs, Rng& rng) {
  Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error("singular posterior precision");
  const VectorXd mean = llt.solve(rhs);
  const VectorXd z = rng.normal_vector(mean.size());
  // precision = L L' ; x = mean + L'^{-1} z has covariance precision^{-1}.
  return mean + llt.matrixU().solve(z);
}

}  // namespace lvdfm
