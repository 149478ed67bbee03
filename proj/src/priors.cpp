#include "lvdfm/priors.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace lvdfm {

namespace {

// E[log chi^2_1]; the log of a squared Gaussian residual underestimates its
// log-variance by this amount on average.
constexpr double kLogChiSquareMean = -1.2703628454614782;

// Rotates factors and loadings so that the anchor rows of the loadings
// become the identity. Returns false, leaving the inputs untouched, when an
// anchor is missing or the anchor block is ill-conditioned.
bool rotate_to_anchors(MatrixXd& loadings, MatrixXd& factors, const std::vector<int>& anchors) {
  const auto n = static_cast<Eigen::Index>(anchors.size());
  for (int a : anchors)
    if (a < 0) return false;
  MatrixXd block(n, n);
  for (Eigen::Index j = 0; j < n; ++j) block.row(j) = loadings.row(anchors[j]);
  Eigen::JacobiSVD<MatrixXd> svd(block);
  const auto sv = svd.singularValues();
  if (sv.size() == 0 || sv.minCoeff() < 1e-4 * std::max(sv.maxCoeff(), 1e-300)) return false;
  const MatrixXd inv = block.inverse();
  loadings = loadings * inv;
  factors = factors * block.transpose();
  return true;
}

// Column-by-column extraction: factor j is the first principal component of
// the current residuals of the series free in column j, scaled to its anchor.
void sequential_extract(const MatrixXd& centered, const Mask& free, const std::vector<int>& anchors,
                        MatrixXd& loadings, MatrixXd& factors) {
  const Eigen::Index n = centered.rows(), t = centered.cols(), k = free.cols();
  MatrixXd resid = centered;
  loadings = MatrixXd::Zero(n, k);
  factors = MatrixXd::Zero(t, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (free(i, j)) rows.push_back(i);
    if (rows.empty()) continue;
    MatrixXd sub(rows.size(), t);
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(r) = resid.row(rows[r]);
    if (sub.squaredNorm() <= 1e-300) continue;
    VectorXd f = pca_extract(sub, 1).factors.col(0);
    if (anchors[j] >= 0) {
      const double b = resid.row(anchors[j]).dot(f) / f.squaredNorm();
      if (std::abs(b) > 1e-8) f *= b;
    }
    const double ff = f.squaredNorm();
    for (Eigen::Index i : rows) {
      const double b = resid.row(i).dot(f) / ff;
      loadings(i, j) = b;
      resid.row(i) -= b * f.transpose();
    }
    factors.col(j) = f;
  }
}

// Ridge regression of each non-anchor series on its free factors.
MatrixXd ridge_loadings(const MatrixXd& centered, const MatrixXd& factors, const Mask& free,
                        const std::vector<int>& anchors, double prior_var) {
  const Eigen::Index n = centered.rows(), k = factors.cols();
  MatrixXd out = MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < k; ++j)
      if (free(i, j)) cols.push_back(j);
    if (cols.empty()) continue;
    MatrixXd fs(factors.rows(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) fs.col(c) = factors.col(cols[c]);
    MatrixXd prec = fs.transpose() * fs;
    prec.diagonal().array() += 1.0 / prior_var;
    const VectorXd b = prec.ldlt().solve(fs.transpose() * centered.row(i).transpose());
    for (std::size_t c = 0; c < cols.size(); ++c) out(i, cols[c]) = b[c];
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    if (anchors[j] < 0) continue;
    out.row(anchors[j]).setZero();
    out(anchors[j], j) = 1.0;
  }
  return out;
}

// Initial factors and loadings for one block, honoring anchors and masks.
void extract_block(const MatrixXd& data, int k, const Mask& mask, const std::vector<int>& anchors,
                   double prior_var, MatrixXd& loadings, MatrixXd& factors) {
  const MatrixXd centered = data.colwise() - data.rowwise().mean();
  const Mask free = mask.size() == 0 ? Mask::Constant(data.rows(), k, true) : mask;
  bool done = false;
  if (mask.size() == 0) {
    PcaResult pc = pca_extract(data, k);
    loadings = pc.loadings;
    factors = pc.factors;
    done = rotate_to_anchors(loadings, factors, anchors);
  }
  if (!done) sequential_extract(centered, free, anchors, loadings, factors);
  loadings = ridge_loadings(centered, factors, free, anchors, prior_var);
}

}  // namespace

void PriorSet::check() const {
  if (!(a_var > 0.0) || !(h_scale > 0.0) || !(h_dof > 0.0) || !(bload_var > 0.0) ||
      !(volload_var > 0.0) || !(rho_var > 0.0) || !(nu0 > 0.0))
    throw Error("PriorSet: variances must be strictly positive");
  if ((gamma_var.array() <= 0.0).any()) throw Error("PriorSet: gamma_var must be positive");
  if (dummy_y.cols() != gamma_mean.cols() || dummy_x.cols() != gamma_mean.rows() ||
      dummy_x.rows() != dummy_y.rows())
    throw Error("PriorSet: dummy blocks inconsistent with regressor dimension");
}

PcaResult pca_extract(const MatrixXd& data, int n_comp) {
  const Eigen::Index n = data.rows();
  const Eigen::Index t = data.cols();
  if (n_comp < 1 || n_comp > std::min(n, t)) throw Error("pca_extract: n_comp out of range");
  const MatrixXd centered = data.colwise() - data.rowwise().mean();
  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double tol = 1e-10 * std::max(sv[0], 1e-300) * static_cast<double>(std::max(n, t));
  if (sv[0] <= 0.0 || sv[n_comp - 1] <= tol) throw Error("insufficient rank");
  const double st = std::sqrt(static_cast<double>(t));
  PcaResult out;
  out.singular_values = sv;
  out.factors = svd.matrixV().leftCols(n_comp) * st;
  out.loadings = svd.matrixU().leftCols(n_comp) * sv.head(n_comp).asDiagonal() / st;
  for (int j = 0; j < n_comp; ++j) {
    if (out.loadings.col(j).sum() < 0.0) {
      out.loadings.col(j) *= -1.0;
      out.factors.col(j) *= -1.0;
    }
  }
  return out;
}

MatrixXd init_idio_logvol(const MatrixXd& residuals, int window, double offset) {
  if (window < 3 || window % 2 == 0) throw Error("init_idio_logvol: window must be odd and >= 3");
  const Eigen::Index t_len = residuals.cols();
  if (window > t_len) throw Error("init_idio_logvol: window longer than series");
  const MatrixXd logsq = (residuals.array().square() + offset).log().matrix();
  const int half = window / 2;
  MatrixXd out(residuals.rows(), t_len);
  // Prefix sums per series for O(T) windowed means.
  MatrixXd cum = MatrixXd::Zero(residuals.rows(), t_len + 1);
  for (Eigen::Index t = 0; t < t_len; ++t) cum.col(t + 1) = cum.col(t) + logsq.col(t);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
    const Eigen::Index hi = std::min<Eigen::Index>(t_len - 1, t + half);
    out.col(t) = (cum.col(hi + 1) - cum.col(lo)) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

Ar1Fit ar1_fit(const MatrixXd& factor_data) {
  const Eigen::Index t_len = factor_data.rows();
  const Eigen::Index m = factor_data.cols();
  if (t_len < 4) throw Error("ar1_fit: too few observations");
  Ar1Fit fit{VectorXd(m), VectorXd(m)};
  MatrixXd x(t_len - 1, 2);
  x.col(1).setOnes();
  for (Eigen::Index k = 0; k < m; ++k) {
    x.col(0) = factor_data.col(k).head(t_len - 1);
    const VectorXd y = factor_data.col(k).tail(t_len - 1);
    const VectorXd b = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const VectorXd e = y - x * b;
    fit.coef[k] = b[0];
    fit.sigma[k] = std::sqrt(e.squaredNorm() / static_cast<double>(t_len - 3));
  }
  return fit;
}

DummyObs minnesota_dummies(const Eigen::Ref<const VectorXd>& ar1_coef, int lags, double tau,
                           double intercept_tightness, const Eigen::Ref<const VectorXd>& ar1_sigmas) {
  const Eigen::Index m = ar1_sigmas.size();
  if (!(tau > 0.0)) throw Error("minnesota_dummies: tau must be positive");
  if (!(intercept_tightness > 0.0)) throw Error("minnesota_dummies: intercept tightness must be positive");
  if (lags < 1) throw Error("minnesota_dummies: lags must be >= 1");
  if ((ar1_sigmas.array() <= 0.0).any() || !ar1_sigmas.allFinite())
    throw Error("minnesota_dummies: AR(1) sigmas must be positive");
  if (ar1_coef.size() != m) throw Error("minnesota_dummies: coefficient/sigma length mismatch");
  const Eigen::Index k = m * lags + 1;
  const Eigen::Index rows = m * lags + m + 1;
  DummyObs d{MatrixXd::Zero(rows, m), MatrixXd::Zero(rows, k)};
  // Lag block: row (l, j) pins coefficient of variable j at lag l.
  for (int l = 1; l <= lags; ++l) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index r = (l - 1) * m + j;
      d.x(r, (l - 1) * m + j) = static_cast<double>(l) * ar1_sigmas[j] / tau;
      if (l == 1) d.y(r, j) = ar1_coef[j] * ar1_sigmas[j] / tau;
    }
  }
  // Covariance block.
  for (Eigen::Index j = 0; j < m; ++j) d.y(m * lags + j, j) = ar1_sigmas[j];
  // Loose intercept.
  d.x(rows - 1, k - 1) = 1.0 / intercept_tightness;
  return d;
}

DummyObs minnesota_dummies_from_data(const MatrixXd& factor_data, int lags, double tau,
                           double intercept_tightness, const Eigen::Ref<const VectorXd>& ar1_sigmas) {
  const Ar1Fit fit = ar1_fit(factor_data);
  return minnesota_dummies(fit.coef, lags, tau, intercept_tightness, ar1_sigmas);
}

MatrixXd stacked_least_squares(const MatrixXd& y, const MatrixXd& x) {
  const MatrixXd xtx = x.transpose() * x;
  Eigen::LDLT<MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success) throw Error("stacked_least_squares: singular design");
  return ldlt.solve(x.transpose() * y);
}

InitialState build_priorset(const Panel& panel, const ModelConfig& config) {
  config.validate();
  panel.validate();
  if (panel.n_series() != config.n_series) throw Error("build_priorset: panel/config size mismatch");
  const int n = panel.n_series();
  const int t_len = panel.n_periods();
  const int jl = config.n_level;
  const int kv = config.n_vol;
  const int m = jl + kv;
  if (t_len <= config.presample() + 2 * m) throw Error("build_priorset: sample too short");

  // Level factors.
  const auto la = config.resolved_level_anchors();
  const auto va = config.resolved_vol_anchors();
  MatrixXd b_level, f_level;
  extract_block(panel.data, jl, config.level_mask, la, config.loading_prior_var, b_level, f_level);
  const VectorXd row_means = panel.data.rowwise().mean();
  const MatrixXd resid = (panel.data.colwise() - row_means) - b_level * f_level.transpose();

  // Volatility factors from the log-squared residual proxy.
  MatrixXd b_vol(n, kv);
  MatrixXd f_vol(t_len, kv);
  if (kv > 0) {
    const MatrixXd logvol =
        (init_idio_logvol(resid, config.logvol_window, config.logvol_offset).array() -
         kLogChiSquareMean)
            .matrix();
    extract_block(logvol, kv, config.vol_mask, va, config.loading_prior_var, b_vol, f_vol);
    // Restore the level of log-volatility lost by demeaning, through the anchors.
    const VectorXd lv_means = logvol.rowwise().mean();
    for (int j = 0; j < kv; ++j)
      if (va[j] >= 0) f_vol.col(j).array() += lv_means[va[j]];
  }

  MatrixXd factors(t_len, m);
  factors.leftCols(jl) = f_level;
  if (kv > 0) factors.rightCols(kv) = f_vol;

  Ar1Fit ar1 = ar1_fit(factors);
  // Dead columns (no free series) stay at zero; centre them on white noise.
  for (int j = 0; j < m; ++j) {
    if (factors.col(j).cwiseAbs().maxCoeff() == 0.0 || !(ar1.sigma[j] > 1e-12)) {
      ar1.coef[j] = 0.0;
      ar1.sigma[j] = 1.0;
    }
  }
  const DummyObs dummies = minnesota_dummies(ar1.coef, config.lag_factor, config.minnesota_tau,
                                             config.intercept_tightness, ar1.sigma);

  InitialState st;
  PriorSet& pr = st.priors;
  pr.dummy_y = dummies.y;
  pr.dummy_x = dummies.x;
  const MatrixXd xtx_inv = (dummies.x.transpose() * dummies.x).inverse();
  pr.gamma_mean = xtx_inv * dummies.x.transpose() * dummies.y;
  pr.gamma_var.resize(pr.gamma_mean.rows(), m);
  for (int k = 0; k < m; ++k)
    pr.gamma_var.col(k) = xtx_inv.diagonal() * ar1.sigma[k] * ar1.sigma[k];
  pr.a_mean = 0.0;
  pr.a_var = config.a_prior_var;
  pr.h_scale = config.h_prior_scale;
  pr.h_dof = config.h_prior_dof;
  pr.bload_mean = b_level;
  pr.bload_var = config.loading_prior_var;
  pr.volload_mean = b_vol;
  pr.volload_var = config.loading_prior_var;
  pr.rho_mean = 0.0;
  pr.rho_var = config.rho_prior_var;
  pr.nu0 = config.nu0;
  pr.check();

  ParamDraw& d = st.draw;
  const MatrixXd xv = var_regressors(factors, config.lag_factor);
  MatrixXd ya(t_len + dummies.y.rows(), m);
  MatrixXd xa(t_len + dummies.x.rows(), xv.cols());
  ya << factors, dummies.y;
  xa << xv, dummies.x;
  d.gamma = stacked_least_squares(ya, xa);
  if (companion_radius(d.gamma) >= 1.0) d.gamma = pr.gamma_mean;
  d.a_mat = MatrixXd::Identity(m, m);
  d.h_diag = VectorXd::Ones(m);
  d.b_level = b_level;
  d.b_vol = b_vol;
  d.rho = MatrixXd::Zero(n, config.lag_idio);
  d.lambda = MatrixXd::Ones(n, t_len);
  d.nu = VectorXd::Constant(n, config.nu0);
  d.check();

  st.path.path = factors;
  st.path.n_level = jl;
  return st;
}

}  // namespace lvdfm
