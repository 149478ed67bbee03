#include "lvdfm/pgas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lvdfm {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

PgasModel::PgasModel(const Panel& panel, const ParamDraw& params)
    : n_periods_(panel.n_periods()),
      n_factors_(params.n_factors()),
      n_level_(static_cast<int>(params.b_level.cols())),
      lag_factor_(params.n_lags()),
      lag_idio_(static_cast<int>(params.rho.cols())),
      first_obs_(std::max(params.n_lags(), static_cast<int>(params.rho.cols()))),
      window_(std::max(params.n_lags(), static_cast<int>(params.rho.cols())) + 1),
      b_level_(params.b_level),
      b_vol_(params.b_vol),
      rho_(params.rho) {
  if (params.lambda.cols() != n_periods_ || params.b_level.rows() != panel.n_series())
    throw Error("PgasModel: parameter shapes do not match the panel");
  x_qd_ = quasi_difference_panel(panel.data, params.rho);
  log_lambda_ = params.lambda.array().log().matrix();
  gamma_t_ = params.gamma.transpose();
  const MatrixXd omega = params.omega();
  Eigen::LLT<MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw Error("PgasModel: Omega is not positive definite");
  omega_chol_ = llt.matrixL();
  log_norm_ = -0.5 * n_factors_ * kLog2Pi - omega_chol_.diagonal().array().log().sum();
  bf_scratch_.resize(b_level_.rows(), lag_idio_ + 1);
}

VectorXd PgasModel::transition_mean(const Eigen::Ref<const MatrixXd>& lags) const {
  const int m = n_factors_;
  VectorXd mean = gamma_t_.col(gamma_t_.cols() - 1);
  for (int l = 0; l < lag_factor_; ++l) mean.noalias() += gamma_t_.middleCols(l * m, m) * lags.col(l);
  return mean;
}

double PgasModel::transition_logdensity(const Eigen::Ref<const VectorXd>& state,
                                        const Eigen::Ref<const MatrixXd>& lags) const {
  const VectorXd z =
      omega_chol_.triangularView<Eigen::Lower>().solve(state - transition_mean(lags));
  return log_norm_ - 0.5 * z.squaredNorm();
}

double PgasModel::observation_loglik(int t, const Eigen::Ref<const MatrixXd>& level_history,
                                     const Eigen::Ref<const VectorXd>& vol_t) const {
  if (t < first_obs_) return 0.0;
  bf_scratch_.noalias() = b_level_ * level_history.leftCols(lag_idio_ + 1);
  const Eigen::Index n = b_level_.rows();
  const bool has_vol = b_vol_.cols() > 0;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = bf_scratch_(i, 0);
    for (int l = 1; l <= lag_idio_; ++l) mean -= rho_(i, l - 1) * bf_scratch_(i, l);
    const double expo = has_vol ? b_vol_.row(i).dot(vol_t) : 0.0;
    if (!(std::abs(expo) <= kMaxLogVolatility)) return kNegInf;
    const double logvar = expo - log_lambda_(i, t);
    const double e = x_qd_(i, t) - mean;
    ll -= 0.5 * (kLog2Pi + logvar + e * e * std::exp(-logvar));
  }
  return ll;
}

VectorXd ancestor_logweights(const PgasModel& model, int t, const MatrixXd& prev_windows,
                             const MatrixXd& reference, const VectorXd& filter_logw) {
  const int m = model.n_factors();
  const int jl = model.n_level();
  const int lf = model.lag_factor();
  const int lv = model.lag_idio();
  const int t_len = model.n_periods();
  const Eigen::Index p = prev_windows.cols();
  VectorXd out = filter_logw;
  MatrixXd lags(m, lf);
  MatrixXd hist(jl, lv + 1);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!std::isfinite(out[i])) continue;
    // State at absolute time tau as seen from the spliced trajectory.
    auto state_at = [&](int tau) -> VectorXd {
      if (tau >= t) return reference.row(tau).transpose();
      return prev_windows.col(i).segment((t - 1 - tau) * m, m);
    };
    double s = out[i];
    for (int j = 0; j < lf && t + j < t_len; ++j) {
      const int u = t + j;
      for (int l = 1; l <= lf; ++l) lags.col(l - 1) = state_at(u - l);
      s += model.transition_logdensity(reference.row(u).transpose(), lags);
    }
    for (int j = 0; j < lv && t + j < t_len; ++j) {
      const int u = t + j;
      if (u < model.first_obs()) continue;
      for (int l = 0; l <= lv; ++l) hist.col(l) = state_at(u - l).head(jl);
      s += model.observation_loglik(u, hist, reference.row(u).tail(m - jl).transpose());
    }
    out[i] = s;
  }
  return out;
}

FactorPath pgas_draw(const PgasModel& model, const FactorPath& reference, int n_particles, Rng& rng,
                     PgasTrace* trace) {
  const int t_len = model.n_periods();
  const int m = model.n_factors();
  const int jl = model.n_level();
  const int lf = model.lag_factor();
  const int lv = model.lag_idio();
  const int w = model.window();
  const int np = n_particles;
  if (np < 2) throw Error("pgas_draw: need at least 2 particles");
  if (reference.n_periods() != t_len || reference.path.cols() != m)
    throw Error("pgas_draw: reference path has the wrong shape");
  const MatrixXd& ref = reference.path;
  const int last = np - 1;

  std::vector<MatrixXd> states(t_len, MatrixXd(m, np));
  Eigen::MatrixXi anc = Eigen::MatrixXi::Zero(t_len, np);
  MatrixXd win = MatrixXd::Zero(m * w, np);
  MatrixXd win_new(m * w, np);
  VectorXd logw = VectorXd::Zero(np);
  VectorXd weights(np);
  VectorXd cdf(np);
  MatrixXd lags(m, lf);
  MatrixXd hist(jl, lv + 1);
  if (trace) {
    trace->reference_states.resize(t_len, m);
    trace->weight_sums.resize(t_len);
  }

  for (int t = 0; t < t_len; ++t) {
    if (t == 0) {
      for (int i = 0; i < np; ++i) anc(0, i) = i;
    } else {
      // weights holds the normalized weights of step t-1.
      std::partial_sum(weights.data(), weights.data() + np, cdf.data());
      const double total = cdf[np - 1];
      for (int i = 0; i < last; ++i) {
        const double u = rng.uniform() * total;
        const double* pos = std::upper_bound(cdf.data(), cdf.data() + np, u);
        anc(t, i) = std::min<int>(static_cast<int>(pos - cdf.data()), np - 1);
      }
      VectorXd filt = weights.array().log().matrix();
      VectorXd alw = ancestor_logweights(model, t, win, ref, filt);
      const double mx = alw.maxCoeff();
      if (!std::isfinite(mx)) throw Error("particle degeneracy at t=" + std::to_string(t));
      anc(t, last) = rng.categorical((alw.array() - mx).exp().matrix());
    }

    for (int i = 0; i < np; ++i) {
      const int a = anc(t, i);
      auto prev = win.col(a);
      if (i < last) {
        for (int l = 0; l < lf; ++l) lags.col(l) = prev.segment(l * m, m);
        VectorXd draw = model.transition_mean(lags);
        draw.noalias() += model.omega_chol() * rng.normal_vector(m);
        win_new.col(i).head(m) = draw;
      } else {
        win_new.col(i).head(m) = ref.row(t).transpose();
      }
      win_new.col(i).tail(m * (w - 1)) = prev.head(m * (w - 1));
    }
    win.swap(win_new);
    states[t] = win.topRows(m);
    if (trace) trace->reference_states.row(t) = win.col(last).head(m).transpose();

    for (int i = 0; i < np; ++i) {
      if (t < model.first_obs()) {
        logw[i] = 0.0;
        continue;
      }
      for (int l = 0; l <= lv; ++l) hist.col(l) = win.col(i).segment(l * m, jl);
      logw[i] = model.observation_loglik(t, hist, win.col(i).segment(jl, m - jl));
    }
    const double mx = logw.maxCoeff();
    if (!std::isfinite(mx)) throw Error("particle degeneracy at t=" + std::to_string(t));
    weights = (logw.array() - mx).exp().matrix();
    weights /= weights.sum();
    if (trace) trace->weight_sums[t] = weights.sum();
  }

  FactorPath out;
  out.n_level = reference.n_level;
  out.path.resize(t_len, m);
  int k = rng.categorical(weights);
  for (int t = t_len - 1; t >= 0; --t) {
    out.path.row(t) = states[t].col(k).transpose();
    k = anc(t, k);
  }
  return out;
}

FactorPath pgas_draw(const Panel& panel, const ParamDraw& params, const FactorPath& reference,
                     int n_particles, std::uint64_t seed) {
  PgasModel model(panel, params);
  Rng rng(seed);
  return pgas_draw(model, reference, n_particles, rng);
}

}  // namespace lvdfm
