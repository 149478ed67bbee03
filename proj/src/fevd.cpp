#include "lvdfm/fevd.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lvdfm {

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

}  // namespace

Mask GroupMask::level_mask() const {
  Mask m(n_series(), 3);
  for (int i = 0; i < n_series(); ++i) {
    m(i, 0) = true;
    m(i, 1) = advanced[i];
    m(i, 2) = !advanced[i];
  }
  return m;
}

Mask GroupMask::vol_mask() const { return level_mask(); }

std::vector<int> GroupMask::anchors() const {
  if (advanced.empty()) throw Error("GroupMask: no series");
  std::vector<int> a{0, -1, -1};
  for (int i = 1; i < n_series(); ++i) {
    const int col = advanced[i] ? 1 : 2;
    if (a[col] < 0) a[col] = i;
  }
  return a;
}

void GroupMask::configure(ModelConfig& config) const {
  if (config.n_series != n_series()) throw Error("GroupMask: series count does not match the config");
  config.n_level = 3;
  config.n_vol = 3;
  config.level_mask = level_mask();
  config.vol_mask = vol_mask();
  config.level_anchors = anchors();
  config.vol_anchors = anchors();
}

ParamDraw apply_group_mask(const ParamDraw& draw, const GroupMask& mask) {
  if (draw.b_level.cols() != 3 || draw.b_vol.cols() != 3 || draw.b_level.rows() != mask.n_series())
    throw Error("apply_group_mask: expected 3 level and 3 volatility columns");
  ParamDraw out = draw;
  const Mask lm = mask.level_mask();
  const Mask vm = mask.vol_mask();
  for (int i = 0; i < mask.n_series(); ++i)
    for (int j = 0; j < 3; ++j) {
      if (!lm(i, j)) out.b_level(i, j) = 0.0;
      if (!vm(i, j)) out.b_vol(i, j) = 0.0;
    }
  return out;
}

std::vector<std::string> default_shock_names(int n_level, int n_vol) {
  if (n_level == 3 && n_vol == 3)
    return {"world_level", "ae_level", "emde_level", "world_vol", "ae_vol", "emde_vol"};
  std::vector<std::string> s;
  for (int j = 0; j < n_level; ++j) s.push_back(fmt::format("level{}", j + 1));
  for (int j = 0; j < n_vol; ++j) s.push_back(fmt::format("vol{}", j + 1));
  return s;
}

MatrixXd impact_matrix(const ParamDraw& draw, const std::vector<int>& ordering) {
  const int m = draw.n_factors();
  if (ordering.empty()) {
    const MatrixXd a_inv = draw.a_mat.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(m, m));
    return a_inv * draw.h_diag.cwiseSqrt().asDiagonal();
  }
  if (static_cast<int>(ordering.size()) != m) throw Error("shock ordering must list every factor");
  std::vector<bool> seen(m, false);
  for (int k : ordering) {
    if (k < 0 || k >= m || seen[k]) throw Error("shock ordering must be a permutation");
    seen[k] = true;
  }
  MatrixXd perm = MatrixXd::Zero(m, m);
  for (int r = 0; r < m; ++r) perm(r, ordering[r]) = 1.0;
  const MatrixXd omega = draw.omega();
  Eigen::LLT<MatrixXd> llt(perm * omega * perm.transpose());
  if (llt.info() != Eigen::Success) throw Error("impact_matrix: Omega is not positive definite");
  // Column r is the impact of the r-th shock in the ordering; report it under factor ordering[r].
  const MatrixXd s = perm.transpose() * MatrixXd(llt.matrixL());
  MatrixXd out(m, m);
  for (int r = 0; r < m; ++r) out.col(ordering[r]) = s.col(r);
  return out;
}

FevdDecomposition fevd_shares(const ParamDraw& draw, const FactorPath& path, const Panel& panel, int series,
                              int origin, int horizon, int n_sims, const std::vector<int>& ordering,
                              std::uint64_t seed) {
  const int m = draw.n_factors();
  const int jl = static_cast<int>(draw.b_level.cols());
  const int kv = static_cast<int>(draw.b_vol.cols());
  const int lf = draw.n_lags();
  const int lv = static_cast<int>(draw.rho.cols());
  if (series < 0 || series >= panel.n_series()) throw Error("fevd_shares: series out of range");
  if (origin < 0 || origin >= path.n_periods()) throw Error("fevd_shares: origin out of range");
  if (horizon < 1 || n_sims < 1) throw Error("fevd_shares: horizon and n_sims must be positive");
  const MatrixXd impact = impact_matrix(draw, ordering);
  const VectorXd c = draw.intercept();
  std::vector<MatrixXd> beta;
  for (int j = 1; j <= lf; ++j) beta.push_back(draw.beta(j));

  MatrixXd lags0 = MatrixXd::Zero(m, lf);
  for (int l = 0; l < lf && origin - l >= 0; ++l) lags0.col(l) = path.path.row(origin - l).transpose();
  VectorXd v0 = VectorXd::Zero(lv);
  for (int l = 0; l < lv && origin - l >= 0; ++l)
    v0[l] = panel.data(series, origin - l) - draw.b_level.row(series).dot(path.path.row(origin - l).head(jl));
  const double nu = draw.nu[series];

  // Scenario 0 = all shocks, 1..m = shock j removed, m+1 = all factor shocks removed.
  const int n_scen = m + 2;
  MatrixXd sq_diff = MatrixXd::Zero(horizon, m);
  VectorXd sum_idio = VectorXd::Zero(horizon), sumsq_idio = VectorXd::Zero(horizon);
  MatrixXd z(m, horizon);
  VectorXd lam(horizon), e(horizon);
  std::vector<MatrixXd> lags(n_scen);
  std::vector<VectorXd> vh(n_scen);
  MatrixXd x(n_scen, horizon);
  for (int s = 0; s < n_sims; ++s) {
    Rng rng(seed, {static_cast<std::uint64_t>(series), static_cast<std::uint64_t>(origin),
                   static_cast<std::uint64_t>(s)});
    for (int k = 0; k < horizon; ++k) {
      z.col(k) = rng.normal_vector(m);
      lam[k] = rng.gamma(0.5 * nu, 2.0 / nu);
      e[k] = rng.normal();
    }
    for (int sc = 0; sc < n_scen; ++sc) {
      lags[sc] = lags0;
      vh[sc] = v0;
      for (int k = 0; k < horizon; ++k) {
        VectorXd zk = z.col(k);
        if (sc >= 1 && sc <= m) zk[sc - 1] = 0.0;
        if (sc == m + 1) zk.setZero();
        VectorXd f = c + impact * zk;
        for (int j = 0; j < lf; ++j) f.noalias() += beta[j] * lags[sc].col(j);
        for (int j = lf - 1; j > 0; --j) lags[sc].col(j) = lags[sc].col(j - 1);
        lags[sc].col(0) = f;
        const double r = kv > 0 ? idio_variance(draw.b_vol.row(series).transpose(), f.tail(kv), lam[k])
                                : 1.0 / lam[k];
        double vn = std::sqrt(r) * e[k];
        for (int l = 0; l < lv; ++l) vn += draw.rho(series, l) * vh[sc][l];
        for (int l = lv - 1; l > 0; --l) vh[sc][l] = vh[sc][l - 1];
        if (lv > 0) vh[sc][0] = vn;
        x(sc, k) = draw.b_level.row(series).dot(f.head(jl)) + vn;
      }
    }
    for (int k = 0; k < horizon; ++k) {
      for (int j = 0; j < m; ++j) {
        const double d = x(0, k) - x(j + 1, k);
        sq_diff(k, j) += d * d;
      }
      sum_idio[k] += x(m + 1, k);
      sumsq_idio[k] += x(m + 1, k) * x(m + 1, k);
    }
  }
  const double ns = static_cast<double>(n_sims);
  FevdDecomposition out;
  out.shares.resize(horizon, m);
  out.residual.resize(horizon);
  // The k-step path difference already accumulates shock j's contributions over steps 1..k.
  for (int k = 0; k < horizon; ++k) {
    const VectorXd var = sq_diff.row(k).transpose() / ns;
    const double mean = sum_idio[k] / ns;
    const double var_idio = std::max(0.0, sumsq_idio[k] / ns - mean * mean);
    const double total = var.sum();
    if (!(total > 0.0)) throw Error("deterministic system");
    out.shares.row(k) = (var / total).transpose();
    out.residual[k] = var_idio / (var_idio + total);
  }
  return out;
}

MatrixXd linear_fevd(const MatrixXd& gamma, const MatrixXd& impact, const Eigen::Ref<const VectorXd>& coef,
                     int horizon) {
  const auto m = gamma.cols();
  const auto lf = (gamma.rows() - 1) / m;
  std::vector<MatrixXd> beta;
  for (Eigen::Index j = 0; j < lf; ++j) beta.push_back(gamma.middleRows(j * m, m).transpose());
  // MA coefficients psi_0 = I, psi_s = sum_j beta_j psi_{s-j}.
  std::vector<MatrixXd> psi{MatrixXd::Identity(m, m)};
  MatrixXd out(horizon, m);
  VectorXd cum = VectorXd::Zero(m);
  for (int s = 0; s < horizon; ++s) {
    if (s > 0) {
      MatrixXd p = MatrixXd::Zero(m, m);
      for (Eigen::Index j = 1; j <= lf && j <= s; ++j) p += beta[j - 1] * psi[s - j];
      psi.push_back(p);
    }
    const VectorXd contrib = (coef.transpose() * psi[s] * impact).transpose();
    cum += contrib.cwiseAbs2();
    const double total = cum.sum();
    if (!(total > 0.0)) throw Error("deterministic system");
    out.row(s) = (cum / total).transpose();
  }
  return out;
}

FevdResult fevd_chain(const Chain& chain, const Panel& panel, const std::vector<int>& series,
                      const FevdOptions& opts) {
  if (chain.draws.empty()) throw Error("fevd_chain: empty chain");
  if (opts.n_origins < 1) throw Error("fevd_chain: need at least one origin");
  const int n_stored = static_cast<int>(chain.draws.size());
  const int n_use = std::min(n_stored, std::max(1, opts.max_draws));
  const int t_len = panel.n_periods();
  const int m = chain.draws[0].n_factors();
  const int first = chain.config.presample();
  std::vector<int> origins;
  for (int k = 0; k < opts.n_origins; ++k) {
    const double frac = opts.n_origins == 1 ? 1.0 : static_cast<double>(k) / (opts.n_origins - 1);
    origins.push_back(first + static_cast<int>(std::lround(frac * (t_len - 1 - first))));
  }
  FevdResult res;
  res.shocks = default_shock_names(chain.config.n_level, chain.config.n_vol);
  for (int i : series) {
    if (i < 0 || i >= panel.n_series()) throw Error("fevd_chain: series out of range");
    res.series.push_back(panel.labels[i]);
    std::vector<MatrixXd> per_draw;
    std::vector<VectorXd> per_draw_res;
    for (int u = 0; u < n_use; ++u) {
      const int k = n_use == 1 ? n_stored - 1 : static_cast<int>(std::lround(static_cast<double>(u) * (n_stored - 1) / (n_use - 1)));
      MatrixXd acc = MatrixXd::Zero(opts.horizon, m);
      VectorXd acc_res = VectorXd::Zero(opts.horizon);
      for (int o : origins) {
        const FevdDecomposition d =
            fevd_shares(chain.draws[k], chain.paths[k], panel, i, o, opts.horizon, opts.n_sims, opts.ordering,
                        derive_seed(opts.seed, {static_cast<std::uint64_t>(k)}));
        acc += d.shares;
        acc_res += d.residual;
      }
      per_draw.push_back(acc / static_cast<double>(origins.size()));
      per_draw_res.push_back(acc_res / static_cast<double>(origins.size()));
    }
    MatrixXd med(opts.horizon, m);
    VectorXd med_res(opts.horizon);
    std::vector<double> buf(per_draw.size());
    for (int h = 0; h < opts.horizon; ++h) {
      for (int j = 0; j < m; ++j) {
        for (std::size_t u = 0; u < per_draw.size(); ++u) buf[u] = per_draw[u](h, j);
        med(h, j) = median(buf);
      }
      // Medians are taken per shock; renormalize so each row is a decomposition.
      const double total = med.row(h).sum();
      if (total > 0.0) med.row(h) /= total;
      for (std::size_t u = 0; u < per_draw.size(); ++u) buf[u] = per_draw_res[u][h];
      med_res[h] = median(buf);
    }
    res.median.push_back(std::move(med));
    res.residual.push_back(std::move(med_res));
  }
  return res;
}

std::string to_csv(const FevdResult& result) {
  std::string out = "series,horizon,shock,share_median\n";
  for (std::size_t s = 0; s < result.series.size(); ++s) {
    const MatrixXd& med = result.median[s];
    for (Eigen::Index h = 0; h < med.rows(); ++h) {
      for (Eigen::Index j = 0; j < med.cols(); ++j)
        out += fmt::format("{},{},{},{:.10g}\n", result.series[s], h + 1, result.shocks[j], med(h, j));
      out += fmt::format("{},{},{},{:.10g}\n", result.series[s], h + 1, "idiosyncratic_residual",
                         result.residual[s][h]);
    }
  }
  return out;
}

}  // namespace lvdfm
