#include "lvdfm/benchmark.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lvdfm/kalman.hpp"
#include "lvdfm/priors.hpp"

namespace lvdfm {

namespace {

constexpr double kLogChiSquareMean = -1.2703628454614782;

enum Block : std::uint64_t {
  kBlockH = 1,
  kBlockA,
  kBlockGamma,
  kBlockLoadings,
  kBlockRho,
  kBlockLogVol = 20,
  kBlockQ,
  kBlockFactors,
};

}  // namespace

MatrixXd BenchmarkDraw::omega() const {
  const MatrixXd a_inv = a_mat.triangularView<Eigen::UnitLower>().solve(
      MatrixXd::Identity(a_mat.rows(), a_mat.cols()));
  return a_inv * h_diag.asDiagonal() * a_inv.transpose();
}

void BenchmarkDraw::check() const {
  if (!(h_diag.array() > 0.0).all()) throw Error("benchmark draw: nonpositive H");
  if (!(q.array() > 0.0).all()) throw Error("benchmark draw: nonpositive q");
  if (!log_omega.allFinite() || !gamma.allFinite() || !b_level.allFinite() || !rho.allFinite())
    throw Error("benchmark draw: non-finite entries");
}

double logvol_site_target(const Eigen::Ref<const VectorXd>& eps, const VectorXd& path, int t,
                          double value, double q, int first, double init_var) {
  const auto t_len = static_cast<int>(path.size());
  double lp = 0.0;
  if (t >= first) lp -= 0.5 * (value + eps[t] * eps[t] * std::exp(-value));
  if (t == 0) lp -= 0.5 * value * value / init_var;
  else lp -= 0.5 * (value - path[t - 1]) * (value - path[t - 1]) / q;
  if (t + 1 < t_len) lp -= 0.5 * (path[t + 1] - value) * (path[t + 1] - value) / q;
  return lp;
}

LogVolDraw draw_logvol_rw(const Eigen::Ref<const VectorXd>& eps, const VectorXd& current, double q,
                          double step, int first, double init_var, Rng& rng) {
  LogVolDraw out{current, 0};
  const auto t_len = static_cast<int>(current.size());
  for (int t = 0; t < t_len; ++t) {
    const double old = out.path[t];
    const double cand = old + step * rng.normal();
    const double u = rng.uniform();
    if (!(std::abs(cand) <= kMaxLogVolatility)) continue;
    const double ratio = logvol_site_target(eps, out.path, t, cand, q, first, init_var) -
                         logvol_site_target(eps, out.path, t, old, q, first, init_var);
    if (std::log(u) < ratio) {
      out.path[t] = cand;
      ++out.accepted;
    }
  }
  return out;
}

BenchmarkChain estimate_benchmark(const Panel& panel, const ModelConfig& config_in,
                                  const BenchmarkConfig& bench, const ProgressFn& progress) {
  ModelConfig config = config_in;
  config.n_vol = 0;
  config.vol_anchors.clear();
  config.vol_mask.resize(0, 0);
  config.validate();
  const InitialState init = build_priorset(panel, config);
  const PriorSet& pr = init.priors;
  const int n = panel.n_series();
  const int t_len = panel.n_periods();
  const int jl = config.n_level;
  const int first = config.presample();

  BenchmarkChain chain;
  chain.config = config;
  chain.bench = bench;
  chain.draws.reserve(config.n_stored());
  chain.paths.reserve(config.n_stored());

  BenchmarkDraw d;
  d.gamma = init.draw.gamma;
  d.a_mat = init.draw.a_mat;
  d.h_diag = init.draw.h_diag;
  d.b_level = init.draw.b_level;
  d.rho = init.draw.rho;
  d.q = VectorXd::Constant(n, 0.05);
  FactorPath path = init.path;
  if (!bench.stochastic_volatility) {
    d.log_omega = MatrixXd::Zero(n, t_len);
  } else {
    const MatrixXd resid = panel.data - d.b_level * path.level().transpose();
    d.log_omega = (init_idio_logvol(resid, config.logvol_window, config.logvol_offset).array() -
                   kLogChiSquareMean)
                      .matrix();
  }

  VectorXd step = VectorXd::Constant(n, bench.sv_step);
  Eigen::VectorXi window_acc = Eigen::VectorXi::Zero(n);
  Eigen::VectorXi total_acc = Eigen::VectorXi::Zero(n);

  for (int it = 0; it < config.n_draws; ++it) {
    const Streams streams{config.seed, static_cast<std::uint64_t>(it)};
    const bool burn = it < config.n_burn;
    std::string block = "H";
    try {
      const MatrixXd& f = path.path;
      const MatrixXd xv = var_regressors(f, config.lag_factor);
      MatrixXd xa(xv.rows() + pr.dummy_x.rows(), xv.cols());
      MatrixXd ya(f.rows() + pr.dummy_y.rows(), jl);
      xa << xv, pr.dummy_x;
      ya << f, pr.dummy_y;
      const MatrixXd e = ya - xa * d.gamma;
      {
        Rng rng = streams.at(kBlockH);
        d.h_diag = draw_H(e * d.a_mat.transpose(), pr, rng);
      }
      block = "A";
      {
        Rng rng = streams.at(kBlockA);
        d.a_mat = draw_A(e, d.h_diag, pr, rng);
      }
      block = "VAR coefficients";
      {
        Rng rng = streams.at(kBlockGamma);
        VarDraw vd = draw_var_coeffs(f, d.gamma, d.a_mat, d.h_diag, pr, rng, config.stationarity_retries);
        d.gamma = std::move(vd.gamma);
        if (vd.kept_previous) ++chain.var_stationarity_failures;
      }

      MatrixXd r = d.log_omega.array().exp().matrix();
      block = "level loadings";
      d.b_level = draw_level_loadings(panel.data, f, d.rho, r, pr, config, first, streams);
      block = "idiosyncratic AR";
      {
        const MatrixXd v = panel.data - d.b_level * f.transpose();
        RhoDraw rd = draw_rho(v, r, pr, d.rho, first, streams, config.stationarity_retries);
        d.rho = std::move(rd.rho);
        chain.rho_stationarity_failures += rd.failures;
      }
      const MatrixXd eps = qd_residuals(panel.data, f, d.b_level, d.rho);

      block = "log volatility";
      for (int i = 0; i < n && bench.stochastic_volatility; ++i) {
        Rng rng = streams.at(kBlockLogVol, static_cast<std::uint64_t>(i));
        LogVolDraw lv = draw_logvol_rw(eps.row(i).transpose(), d.log_omega.row(i).transpose(), d.q[i],
                                       step[i], first, bench.logvol_init_var, rng);
        d.log_omega.row(i) = lv.path.transpose();
        if (burn) window_acc[i] += lv.accepted;
        else total_acc[i] += lv.accepted;
      }
      if (bench.stochastic_volatility && burn && (it + 1) % config.adapt_window == 0) {
        const double denom = static_cast<double>(config.adapt_window) * t_len;
        for (int i = 0; i < n; ++i) {
          const double rate = window_acc[i] / denom;
          if (rate > 0.40) step[i] *= 1.1;
          else if (rate < 0.20) step[i] *= 0.9;
          window_acc[i] = 0;
        }
      }

      block = "q";
      for (int i = 0; i < n && bench.stochastic_volatility; ++i) {
        Rng rng = streams.at(kBlockQ, static_cast<std::uint64_t>(i));
        double ss = 0.0;
        for (int t = 1; t < t_len; ++t) {
          const double dh = d.log_omega(i, t) - d.log_omega(i, t - 1);
          ss += dh * dh;
        }
        d.q[i] = rng.inv_gamma(ss + bench.q_prior_scale, (t_len - 1) + bench.q_prior_dof);
      }

      block = "factors";
      {
        LinearStateSpace ss;
        ss.gamma = d.gamma;
        ss.omega = d.omega();
        ss.b_level = d.b_level;
        ss.rho = d.rho;
        ss.r = d.log_omega.array().exp().matrix();
        ss.x_qd = quasi_difference_panel(panel.data, d.rho);
        ss.first_obs = first;
        Rng rng = streams.at(kBlockFactors);
        path.path = ffbs_draw(ss, rng);
      }
    } catch (const Error& err) {
      throw Error("iteration " + std::to_string(it) + ", block " + block + ": " + err.what());
    }
    if (it >= config.n_burn && (it - config.n_burn) % config.thin == 0) {
      d.check();
      chain.draws.push_back(d);
      chain.paths.push_back(path);
    }
    if (progress) progress(it + 1, config.n_draws);
  }
  const double kept = static_cast<double>(config.n_draws - config.n_burn) * t_len;
  chain.sv_acceptance = total_acc.cast<double>() / kept;
  chain.sv_step = step;
  return chain;
}

}  // namespace lvdfm
