#include "lvdfm/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lvdfm/pgas.hpp"

namespace lvdfm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

enum Block : std::uint64_t {
  kBlockH = 1,
  kBlockA,
  kBlockGamma,
  kBlockLoadings,
  kBlockRho,
  kBlockVolLoadings,
  kBlockLambda,
  kBlockNu,
  kBlockFactors,
};

const char* block_name(int b) {
  switch (b) {
    case kBlockH: return "H";
    case kBlockA: return "A";
    case kBlockGamma: return "VAR coefficients";
    case kBlockLoadings: return "level loadings";
    case kBlockRho: return "idiosyncratic AR";
    case kBlockVolLoadings: return "volatility loadings";
    case kBlockLambda: return "scale mixture";
    case kBlockNu: return "degrees of freedom";
    case kBlockFactors: return "factors";
  }
  return "?";
}

bool is_anchor(const std::vector<int>& anchors, int i) {
  for (int a : anchors)
    if (a == i) return true;
  return false;
}

}  // namespace

VectorXd draw_H(const MatrixXd& orthogonal_residuals, const PriorSet& prior, Rng& rng) {
  const Eigen::Index m = orthogonal_residuals.cols();
  const double dof = static_cast<double>(orthogonal_residuals.rows()) + prior.h_dof;
  VectorXd h(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double scale = orthogonal_residuals.col(k).squaredNorm() + prior.h_scale;
    if (!std::isfinite(scale)) throw Error("draw_H: non-finite residuals");
    h[k] = rng.inv_gamma(scale, dof);
  }
  return h;
}

MatrixXd draw_A(const MatrixXd& var_residuals, const VectorXd& h_diag, const PriorSet& prior,
                Rng& rng) {
  const Eigen::Index m = var_residuals.cols();
  MatrixXd a = MatrixXd::Identity(m, m);
  for (Eigen::Index k = 1; k < m; ++k) {
    const MatrixXd z = -var_residuals.leftCols(k);
    const VectorXd y = var_residuals.col(k);
    MatrixXd prec = z.transpose() * z / h_diag[k];
    prec.diagonal().array() += 1.0 / prior.a_var;
    const VectorXd rhs = z.transpose() * y / h_diag[k] + VectorXd::Constant(k, prior.a_mean / prior.a_var);
    if (prec.llt().info() != Eigen::Success) throw Error("collinear residuals");
    a.row(k).head(k) = draw_from_precision(prec, rhs, rng).transpose();
  }
  return a;
}

VarDraw draw_var_coeffs(const MatrixXd& factors, const MatrixXd& gamma_current,
                        const MatrixXd& a_mat, const VectorXd& h_diag, const PriorSet& prior,
                        Rng& rng, int retries) {
  const Eigen::Index m = factors.cols();
  const int lags = static_cast<int>((gamma_current.rows() - 1) / m);
  const MatrixXd xv = var_regressors(factors, lags);
  MatrixXd x(xv.rows() + prior.dummy_x.rows(), xv.cols());
  MatrixXd y(factors.rows() + prior.dummy_y.rows(), m);
  x << xv, prior.dummy_x;
  y << factors, prior.dummy_y;
  const MatrixXd xtx = x.transpose() * x;

  auto sweep = [&](MatrixXd gamma) {
    // Orthogonalized residuals u = (Y - X Gamma) A'.
    MatrixXd u = (y - x * gamma) * a_mat.transpose();
    for (Eigen::Index k = 0; k < m; ++k) {
      MatrixXd prec = MatrixXd::Zero(xtx.rows(), xtx.cols());
      VectorXd rhs = VectorXd::Zero(xtx.rows());
      const VectorXd xg = x * gamma.col(k);
      for (Eigen::Index j = k; j < m; ++j) {
        const double a = a_mat(j, k);
        if (a == 0.0) continue;
        const double w = a / h_diag[j];
        prec += (a * w) * xtx;
        rhs += w * (x.transpose() * (u.col(j) + a * xg));
      }
      const VectorXd old = gamma.col(k);
      gamma.col(k) = draw_from_precision(prec, rhs, rng);
      const VectorXd dx = x * (gamma.col(k) - old);
      for (Eigen::Index j = k; j < m; ++j) u.col(j) -= a_mat(j, k) * dx;
    }
    return gamma;
  };

  for (int attempt = 0; attempt <= retries; ++attempt) {
    MatrixXd g = sweep(gamma_current);
    if (companion_radius(g) < 1.0) return {std::move(g), false};
  }
  return {gamma_current, true};
}

MatrixXd qd_residuals(const MatrixXd& data, const MatrixXd& level, const MatrixXd& b_level,
                      const MatrixXd& rho) {
  const MatrixXd v = data - b_level * level.transpose();
  return quasi_difference_panel(v, rho);
}

MatrixXd draw_level_loadings(const MatrixXd& data, const MatrixXd& level, const MatrixXd& rho,
                             const MatrixXd& r, const PriorSet& prior, const ModelConfig& config,
                             int first, const Streams& streams) {
  const Eigen::Index n = data.rows();
  const Eigen::Index t_len = data.cols();
  const int jl = static_cast<int>(level.cols());
  const int lags = static_cast<int>(rho.cols());
  const auto anchors = config.resolved_level_anchors();
  const MatrixXd x_qd = quasi_difference_panel(data, rho);
  MatrixXd b = MatrixXd::Zero(n, jl);
  for (int j = 0; j < jl; ++j)
    if (anchors[j] >= 0) b(anchors[j], j) = 1.0;
  const Eigen::Index n_obs = t_len - first;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_anchor(anchors, static_cast<int>(i))) continue;
    std::vector<int> free;
    for (int j = 0; j < jl; ++j)
      if (config.level_free(static_cast<int>(i), j)) free.push_back(j);
    if (free.empty()) continue;
    const auto nf = static_cast<Eigen::Index>(free.size());
    MatrixXd z(n_obs, nf);
    VectorXd yv(n_obs);
    for (Eigen::Index t = first; t < t_len; ++t) {
      const double s = 1.0 / std::sqrt(r(i, t));
      yv[t - first] = x_qd(i, t) * s;
      for (Eigen::Index c = 0; c < nf; ++c) {
        double fq = level(t, free[c]);
        for (int l = 1; l <= lags; ++l) fq -= rho(i, l - 1) * level(t - l, free[c]);
        z(t - first, c) = fq * s;
      }
    }
    MatrixXd prec = z.transpose() * z;
    prec.diagonal().array() += 1.0 / prior.bload_var;
    VectorXd rhs = z.transpose() * yv;
    for (Eigen::Index c = 0; c < nf; ++c) rhs[c] += prior.bload_mean(i, free[c]) / prior.bload_var;
    Rng rng = streams.at(kBlockLoadings, static_cast<std::uint64_t>(i));
    const VectorXd draw = draw_from_precision(prec, rhs, rng);
    for (Eigen::Index c = 0; c < nf; ++c) b(i, free[c]) = draw[c];
  }
  return b;
}

RhoDraw draw_rho(const MatrixXd& idio, const MatrixXd& r, const PriorSet& prior,
                 const MatrixXd& rho_current, int first, const Streams& streams, int retries) {
  const Eigen::Index n = idio.rows();
  const Eigen::Index t_len = idio.cols();
  const Eigen::Index lags = rho_current.cols();
  const Eigen::Index n_obs = t_len - first;
  RhoDraw out{rho_current, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    MatrixXd z(n_obs, lags);
    VectorXd yv(n_obs);
    for (Eigen::Index t = first; t < t_len; ++t) {
      const double s = 1.0 / std::sqrt(r(i, t));
      yv[t - first] = idio(i, t) * s;
      for (Eigen::Index l = 1; l <= lags; ++l) z(t - first, l - 1) = idio(i, t - l) * s;
    }
    MatrixXd prec = z.transpose() * z;
    prec.diagonal().array() += 1.0 / prior.rho_var;
    const VectorXd rhs = z.transpose() * yv + VectorXd::Constant(lags, prior.rho_mean / prior.rho_var);
    Rng rng = streams.at(kBlockRho, static_cast<std::uint64_t>(i));
    bool ok = false;
    for (int attempt = 0; attempt <= retries && !ok; ++attempt) {
      const VectorXd draw = draw_from_precision(prec, rhs, rng);
      if (ar_radius(draw) < 1.0) {
        out.rho.row(i) = draw.transpose();
        ok = true;
      }
    }
    if (!ok) ++out.failures;
  }
  return out;
}

double volload_log_target(const Eigen::Ref<const VectorXd>& b_vol_i,
                          const Eigen::Ref<const VectorXd>& eps_i, const MatrixXd& vol,
                          const Eigen::Ref<const VectorXd>& lambda_i,
                          const Eigen::Ref<const VectorXd>& prior_mean, double prior_var,
                          int first) {
  double lp = -0.5 * (b_vol_i - prior_mean).squaredNorm() / prior_var;
  const Eigen::Index t_len = eps_i.size();
  for (Eigen::Index t = first; t < t_len; ++t) {
    const double expo = vol.row(t).dot(b_vol_i);
    if (!(std::abs(expo) <= kMaxLogVolatility)) return -std::numeric_limits<double>::infinity();
    const double logvar = expo - std::log(lambda_i[t]);
    lp -= 0.5 * (kLog2Pi + logvar + eps_i[t] * eps_i[t] * std::exp(-logvar));
  }
  return lp;
}

double volload_log_acceptance(const Eigen::Ref<const VectorXd>& from, const Eigen::Ref<const VectorXd>& to,
                              const Eigen::Ref<const VectorXd>& eps_i, const MatrixXd& vol,
                              const Eigen::Ref<const VectorXd>& lambda_i,
                              const Eigen::Ref<const VectorXd>& prior_mean, double prior_var, int first) {
  const double lp_to = volload_log_target(to, eps_i, vol, lambda_i, prior_mean, prior_var, first);
  if (!std::isfinite(lp_to)) return -std::numeric_limits<double>::infinity();
  const double lp_from = volload_log_target(from, eps_i, vol, lambda_i, prior_mean, prior_var, first);
  return std::min(0.0, lp_to - lp_from);
}

VolLoadDraw draw_vol_loadings(const MatrixXd& eps, const MatrixXd& vol, const MatrixXd& b_vol,
                              const MatrixXd& lambda, const PriorSet& prior,
                              const ModelConfig& config, const VectorXd& step, int first,
                              const Streams& streams) {
  const Eigen::Index n = eps.rows();
  const int kv = static_cast<int>(vol.cols());
  const auto anchors = config.resolved_vol_anchors();
  VolLoadDraw out{b_vol, std::vector<bool>(n, false)};
  if (kv == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_anchor(anchors, static_cast<int>(i))) continue;
    Rng rng = streams.at(kBlockVolLoadings, static_cast<std::uint64_t>(i));
    const VectorXd current = b_vol.row(i).transpose();
    VectorXd cand = current;
    bool any_free = false;
    for (int j = 0; j < kv; ++j) {
      if (!config.vol_free(static_cast<int>(i), j)) continue;
      cand[j] += step[i] * rng.normal();
      any_free = true;
    }
    if (!any_free) continue;
    const VectorXd pm = prior.volload_mean.row(i).transpose();
    const double log_alpha = volload_log_acceptance(current, cand, eps.row(i).transpose(), vol,
                                                    lambda.row(i).transpose(), pm, prior.volload_var, first);
    const double u = rng.uniform();
    if (std::log(u) < log_alpha) {
      out.b_vol.row(i) = cand.transpose();
      out.accepted[i] = true;
    }
  }
  return out;
}

MatrixXd draw_lambda(const MatrixXd& eps, const MatrixXd& r_tilde, const VectorXd& nu, int first,
                     const Streams& streams) {
  const Eigen::Index n = eps.rows();
  const Eigen::Index t_len = eps.cols();
  MatrixXd lambda(n, t_len);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = streams.at(kBlockLambda, static_cast<std::uint64_t>(i));
    const double v = nu[i];
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double shape = 0.5 * v;
      double rate = 0.5 * v;
      if (t >= first) {
        shape = 0.5 * (v + 1.0);
        rate = 0.5 * (eps(i, t) * eps(i, t) / r_tilde(i, t) + v);
      }
      lambda(i, t) = std::max(rng.gamma(shape, 1.0 / rate), std::numeric_limits<double>::min());
    }
  }
  return lambda;
}

double nu_log_target(const Eigen::Ref<const VectorXd>& lambda_i, double nu, double nu0) {
  if (!(nu > 0.0)) return -std::numeric_limits<double>::infinity();
  const auto t_len = static_cast<double>(lambda_i.size());
  const double s = (-lambda_i.array().log() + lambda_i.array()).sum();
  return 0.5 * t_len * nu * std::log(0.5 * nu) - t_len * std::lgamma(0.5 * nu) -
         (1.0 / nu0 + 0.5 * s) * nu;
}

double nu_log_acceptance(const Eigen::Ref<const VectorXd>& lambda_i, double from, double to, double nu0) {
  if (!(to > 0.0) || !std::isfinite(to)) return -std::numeric_limits<double>::infinity();
  // Target on the log scale includes the Jacobian d nu / d log nu = nu.
  const double ratio = nu_log_target(lambda_i, to, nu0) + std::log(to) - nu_log_target(lambda_i, from, nu0) -
                       std::log(from);
  return std::min(0.0, ratio);
}

NuDraw draw_nu(const Eigen::Ref<const VectorXd>& lambda_i, double nu_old, double nu0, double step,
               Rng& rng) {
  const double log_new = std::log(nu_old) + step * rng.normal();
  const double nu_new = std::exp(log_new);
  const double u = rng.uniform();
  if (!(nu_new > 0.0) || !std::isfinite(nu_new)) return {nu_old, false};
  if (std::log(u) < nu_log_acceptance(lambda_i, nu_old, nu_new, nu0)) return {nu_new, true};
  return {nu_old, false};
}

ChainState initial_chain_state(const InitialState& init, const ModelConfig& config) {
  ChainState s;
  s.draw = init.draw;
  s.path = init.path;
  s.priors = init.priors;
  const int n = config.n_series;
  s.volload_step = VectorXd::Constant(n, config.mh_step_volload);
  s.nu_step = VectorXd::Constant(n, config.mh_step_nu);
  s.volload_window_accepts = Eigen::VectorXi::Zero(n);
  s.nu_window_accepts = Eigen::VectorXi::Zero(n);
  s.volload_accepts = Eigen::VectorXi::Zero(n);
  s.nu_accepts = Eigen::VectorXi::Zero(n);
  return s;
}

void gibbs_iteration(const Panel& panel, const ModelConfig& config, ChainState& state,
                     ChainDiagnostics& diag) {
  const int jl = config.n_level;
  const int kv = config.n_vol;
  const int n = config.n_series;
  const int first = config.presample();
  const Streams streams{config.seed, static_cast<std::uint64_t>(state.iteration)};
  ParamDraw& d = state.draw;
  const PriorSet& pr = state.priors;
  int block = kBlockH;
  try {
    const MatrixXd& f = state.path.path;
    const MatrixXd xv = var_regressors(f, config.lag_factor);
    MatrixXd xa(xv.rows() + pr.dummy_x.rows(), xv.cols());
    MatrixXd ya(f.rows() + pr.dummy_y.rows(), f.cols());
    xa << xv, pr.dummy_x;
    ya << f, pr.dummy_y;
    const MatrixXd e = ya - xa * d.gamma;

    block = kBlockH;
    {
      Rng rng = streams.at(kBlockH);
      d.h_diag = draw_H(e * d.a_mat.transpose(), pr, rng);
    }
    block = kBlockA;
    {
      Rng rng = streams.at(kBlockA);
      d.a_mat = draw_A(e, d.h_diag, pr, rng);
    }
    block = kBlockGamma;
    {
      Rng rng = streams.at(kBlockGamma);
      VarDraw vd = draw_var_coeffs(f, d.gamma, d.a_mat, d.h_diag, pr, rng, config.stationarity_retries);
      d.gamma = std::move(vd.gamma);
      if (vd.kept_previous) ++diag.var_stationarity_failures;
    }

    const MatrixXd level = f.leftCols(jl);
    const MatrixXd vol = f.rightCols(kv);
    MatrixXd logr_tilde = kv > 0 ? MatrixXd(d.b_vol * vol.transpose()) : MatrixXd::Zero(n, f.rows());
    MatrixXd r = (logr_tilde.array().exp() / d.lambda.array()).matrix();

    block = kBlockLoadings;
    d.b_level = draw_level_loadings(panel.data, level, d.rho, r, pr, config, first, streams);

    block = kBlockRho;
    {
      const MatrixXd v = panel.data - d.b_level * level.transpose();
      RhoDraw rd = draw_rho(v, r, pr, d.rho, first, streams, config.stationarity_retries);
      d.rho = std::move(rd.rho);
      diag.rho_stationarity_failures += rd.failures;
    }
    const MatrixXd eps = qd_residuals(panel.data, level, d.b_level, d.rho);

    const bool burn = state.iteration < config.n_burn;
    block = kBlockVolLoadings;
    if (kv > 0) {
      VolLoadDraw vd =
          draw_vol_loadings(eps, vol, d.b_vol, d.lambda, pr, config, state.volload_step, first, streams);
      d.b_vol = std::move(vd.b_vol);
      for (int i = 0; i < n; ++i) {
        if (!vd.accepted[i]) continue;
        if (burn) ++state.volload_window_accepts[i];
        else ++state.volload_accepts[i];
      }
      logr_tilde = d.b_vol * vol.transpose();
    }

    block = kBlockLambda;
    d.lambda = draw_lambda(eps, logr_tilde.array().exp().matrix(), d.nu, first, streams);

    block = kBlockNu;
    for (int i = 0; i < n; ++i) {
      Rng rng = streams.at(kBlockNu, static_cast<std::uint64_t>(i));
      const NuDraw nd = draw_nu(d.lambda.row(i).transpose(), d.nu[i], pr.nu0, state.nu_step[i], rng);
      d.nu[i] = nd.nu;
      if (nd.accepted) {
        if (burn) ++state.nu_window_accepts[i];
        else ++state.nu_accepts[i];
      }
    }

    // Step adaptation during burn-in only.
    if (burn && (state.iteration + 1) % config.adapt_window == 0) {
      auto adapt = [&](VectorXd& step, Eigen::VectorXi& acc) {
        for (int i = 0; i < n; ++i) {
          const double rate = static_cast<double>(acc[i]) / config.adapt_window;
          if (rate > 0.40) step[i] *= 1.1;
          else if (rate < 0.20) step[i] *= 0.9;
          acc[i] = 0;
        }
      };
      adapt(state.volload_step, state.volload_window_accepts);
      adapt(state.nu_step, state.nu_window_accepts);
    }

    block = kBlockFactors;
    {
      PgasModel model(panel, d);
      Rng rng = streams.at(kBlockFactors);
      state.path = pgas_draw(model, state.path, config.n_particles, rng);
    }
  } catch (const Error& err) {
    throw Error("iteration " + std::to_string(state.iteration) + ", block " + block_name(block) +
                ": " + err.what());
  }
  ++state.iteration;
  ++diag.iterations;
}

Chain run_chain(const Panel& panel, const ModelConfig& config, const InitialState& init,
                const ProgressFn& progress) {
  config.validate();
  panel.validate();
  if (panel.n_series() != config.n_series) throw Error("run_chain: panel/config size mismatch");
  Chain chain;
  chain.config = config;
  chain.draws.reserve(config.n_stored());
  chain.paths.reserve(config.n_stored());
  ChainState state = initial_chain_state(init, config);
  ChainDiagnostics& diag = chain.diagnostics;
  for (int it = 0; it < config.n_draws; ++it) {
    gibbs_iteration(panel, config, state, diag);
    if (it >= config.n_burn && (it - config.n_burn) % config.thin == 0) {
      state.draw.check();
      chain.draws.push_back(state.draw);
      chain.paths.push_back(state.path);
    }
    if (progress) progress(it + 1, config.n_draws);
  }
  const double kept = static_cast<double>(config.n_draws - config.n_burn);
  diag.volload_acceptance = state.volload_accepts.cast<double>() / kept;
  diag.nu_acceptance = state.nu_accepts.cast<double>() / kept;
  diag.volload_step = state.volload_step;
  diag.nu_step = state.nu_step;
  return chain;
}

Chain estimate_lv(const Panel& panel, const ModelConfig& config, const ProgressFn& progress) {
  return run_chain(panel, config, build_priorset(panel, config), progress);
}

}  // namespace lvdfm
