#include "lvdfm/forecast.hpp"

#include <cmath>
#include <limits>

#include "lvdfm/kalman.hpp"

namespace lvdfm {

namespace {

std::vector<int> resolve_targets(const ForecastOptions& opts, const Panel& panel) {
  std::vector<int> t = opts.targets.empty() ? std::vector<int>{0} : opts.targets;
  for (int i : t)
    if (i < 0 || i >= panel.n_series()) throw Error("forecast target out of range");
  return t;
}

PredictiveDensity empty_density(const Panel& panel, const std::vector<int>& targets, int h,
                                Eigen::Index n_rows) {
  PredictiveDensity pd;
  pd.targets = targets;
  for (int i : targets) pd.labels.push_back(panel.labels[i]);
  pd.origin = panel.n_periods();
  pd.draws.assign(h, MatrixXd(n_rows, targets.size()));
  return pd;
}

// Shared simulation: F lags (m x L^F, col 0 = F_T), VAR pieces, and a per-target
// callback producing the observation at each step.
struct VarSim {
  VectorXd c;
  std::vector<MatrixXd> beta;
  MatrixXd chol;

  VarSim(const MatrixXd& gamma, const MatrixXd& omega) {
    const auto m = gamma.cols();
    const auto lags = (gamma.rows() - 1) / m;
    c = gamma.row(gamma.rows() - 1).transpose();
    for (Eigen::Index j = 0; j < lags; ++j) beta.push_back(gamma.middleRows(j * m, m).transpose());
    chol = psd_sqrt(omega);
  }
  VectorXd step(MatrixXd& lags, Rng& rng) const {
    VectorXd f = c;
    for (std::size_t j = 0; j < beta.size(); ++j) f.noalias() += beta[j] * lags.col(j);
    f.noalias() += chol * rng.normal_vector(c.size());
    for (auto j = lags.cols() - 1; j > 0; --j) lags.col(j) = lags.col(j - 1);
    lags.col(0) = f;
    return f;
  }
};

MatrixXd initial_lags(const MatrixXd& path, int lags, const VectorXd& shift) {
  const auto t_len = path.rows();
  MatrixXd out = MatrixXd::Zero(path.cols(), lags);
  for (int l = 0; l < lags && t_len - 1 - l >= 0; ++l) out.col(l) = path.row(t_len - 1 - l).transpose();
  if (shift.size() > 0) {
    if (shift.size() != path.cols()) throw Error("origin shift has the wrong length");
    out.col(0) += shift;
  }
  return out;
}

}  // namespace

VectorXd innovation_shift(const MatrixXd& omega, int index, double size) {
  if (index < 0 || index >= omega.rows()) throw Error("innovation_shift: index out of range");
  return size * omega.col(index) / std::sqrt(omega(index, index));
}

PredictiveDensity predictive_draws(const Chain& chain, const Panel& panel, int h,
                                   const ForecastOptions& opts) {
  if (chain.draws.empty()) throw Error("predictive_draws: empty chain");
  if (h < 1) throw Error("predictive_draws: horizon must be >= 1");
  const auto targets = resolve_targets(opts, panel);
  const int n_stored = static_cast<int>(chain.draws.size());
  const int mpd = opts.m_per_draw;
  const int t_len = panel.n_periods();
  PredictiveDensity pd = empty_density(panel, targets, h, static_cast<Eigen::Index>(n_stored) * mpd);
  int row = 0;
  for (int k = 0; k < n_stored; ++k) {
    const ParamDraw& d = chain.draws[k];
    const FactorPath& path = chain.paths[k];
    if (companion_radius(d.gamma) >= 1.0) {
      ++pd.skipped;
      continue;
    }
    const int jl = static_cast<int>(d.b_level.cols());
    const int kv = static_cast<int>(d.b_vol.cols());
    const int lv = static_cast<int>(d.rho.cols());
    const VarSim sim(d.gamma, d.omega());
    const MatrixXd lags0 = initial_lags(path.path, d.n_lags(), opts.origin_shift);
    // Idiosyncratic history on the standardized scale: column l-1 = v_{T-l}.
    MatrixXd v0(targets.size(), lv);
    for (std::size_t v = 0; v < targets.size(); ++v) {
      const int i = targets[v];
      for (int l = 1; l <= lv; ++l)
        v0(v, l - 1) = t_len - l >= 0 ? panel.data(i, t_len - l) -
                                            d.b_level.row(i).dot(path.path.row(t_len - l).head(jl))
                                      : 0.0;
    }
    for (int j = 0; j < mpd; ++j, ++row) {
      Rng rng(opts.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)});
      MatrixXd lags = lags0;
      MatrixXd vh = v0;
      for (int s = 0; s < h; ++s) {
        const VectorXd f = sim.step(lags, rng);
        for (std::size_t v = 0; v < targets.size(); ++v) {
          const int i = targets[v];
          const double nu = d.nu[i];
          const double lam = rng.gamma(0.5 * nu, 2.0 / nu);
          const double r = kv > 0 ? idio_variance(d.b_vol.row(i).transpose(), f.tail(kv), lam) : 1.0 / lam;
          double vn = std::sqrt(r) * rng.normal();
          for (int l = 0; l < lv; ++l) vn += d.rho(i, l) * vh(v, l);
          for (int l = lv - 1; l > 0; --l) vh(v, l) = vh(v, l - 1);
          vh(v, 0) = vn;
          const double x = d.b_level.row(i).dot(f.head(jl)) + vn;
          pd.draws[s](row, v) = x * panel.stds[i] + panel.means[i];
        }
      }
    }
  }
  if (row < pd.n_draws())
    for (auto& m : pd.draws) m.conservativeResize(row, Eigen::NoChange);
  if (row == 0) throw Error("predictive_draws: every stored draw was explosive");
  return pd;
}

PredictiveDensity predictive_draws(const BenchmarkChain& chain, const Panel& panel, int h,
                                   const ForecastOptions& opts) {
  if (chain.draws.empty()) throw Error("predictive_draws: empty chain");
  if (h < 1) throw Error("predictive_draws: horizon must be >= 1");
  const auto targets = resolve_targets(opts, panel);
  const int n_stored = static_cast<int>(chain.draws.size());
  const int mpd = opts.m_per_draw;
  const int t_len = panel.n_periods();
  PredictiveDensity pd = empty_density(panel, targets, h, static_cast<Eigen::Index>(n_stored) * mpd);
  int row = 0;
  for (int k = 0; k < n_stored; ++k) {
    const BenchmarkDraw& d = chain.draws[k];
    const FactorPath& path = chain.paths[k];
    if (companion_radius(d.gamma) >= 1.0) {
      ++pd.skipped;
      continue;
    }
    const int lv = static_cast<int>(d.rho.cols());
    const int lags_f = static_cast<int>((d.gamma.rows() - 1) / d.gamma.cols());
    const VarSim sim(d.gamma, d.omega());
    const MatrixXd lags0 = initial_lags(path.path, lags_f, opts.origin_shift);
    MatrixXd v0(targets.size(), lv);
    for (std::size_t v = 0; v < targets.size(); ++v) {
      const int i = targets[v];
      for (int l = 1; l <= lv; ++l)
        v0(v, l - 1) = t_len - l >= 0 ? panel.data(i, t_len - l) - d.b_level.row(i).dot(path.path.row(t_len - l))
                                      : 0.0;
    }
    for (int j = 0; j < mpd; ++j, ++row) {
      Rng rng(opts.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)});
      MatrixXd lags = lags0;
      MatrixXd vh = v0;
      VectorXd logw(targets.size());
      for (std::size_t v = 0; v < targets.size(); ++v) logw[v] = d.log_omega(targets[v], t_len - 1);
      for (int s = 0; s < h; ++s) {
        const VectorXd f = sim.step(lags, rng);
        for (std::size_t v = 0; v < targets.size(); ++v) {
          const int i = targets[v];
          logw[v] += std::sqrt(d.q[i]) * rng.normal();
          if (!(std::abs(logw[v]) <= kMaxLogVolatility)) throw Error("volatility overflow");
          double vn = std::exp(0.5 * logw[v]) * rng.normal();
          for (int l = 0; l < lv; ++l) vn += d.rho(i, l) * vh(v, l);
          for (int l = lv - 1; l > 0; --l) vh(v, l) = vh(v, l - 1);
          vh(v, 0) = vn;
          const double x = d.b_level.row(i).dot(f) + vn;
          pd.draws[s](row, v) = x * panel.stds[i] + panel.means[i];
        }
      }
    }
  }
  if (row < pd.n_draws())
    for (auto& m : pd.draws) m.conservativeResize(row, Eigen::NoChange);
  if (row == 0) throw Error("predictive_draws: every stored draw was explosive");
  return pd;
}

MatrixXd cumulate_paths(const MatrixXd& paths, TCode code) {
  MatrixXd out = paths;
  auto prefix = [](MatrixXd& a) {
    for (Eigen::Index s = 1; s < a.cols(); ++s) a.col(s) += a.col(s - 1);
  };
  switch (code) {
    case TCode::LogDiff:
      prefix(out);
      break;
    case TCode::LogDiff2:
      prefix(out);
      prefix(out);
      break;
    case TCode::None:
    case TCode::Diff:
      break;
    default:
      throw Error("cumulate: unknown transformation code");
  }
  return out;
}

PredictiveDensity cumulate_growth(const PredictiveDensity& density, const std::vector<TCode>& tcodes) {
  if (static_cast<int>(tcodes.size()) != density.n_targets())
    throw Error("cumulate_growth: one transformation code per target required");
  PredictiveDensity out = density;
  const int h = density.horizon();
  const int m = density.n_draws();
  for (int v = 0; v < density.n_targets(); ++v) {
    MatrixXd paths(m, h);
    for (int s = 0; s < h; ++s) paths.col(s) = density.draws[s].col(v);
    const MatrixXd c = cumulate_paths(paths, tcodes[v]);
    for (int s = 0; s < h; ++s) out.draws[s].col(v) = c.col(s);
  }
  out.cumulated = true;
  return out;
}

double realized_target(const Eigen::Ref<const VectorXd>& raw_series, int origin, int h, TCode code) {
  if (origin < 0 || h < 1 || origin + h > raw_series.size()) return std::numeric_limits<double>::quiet_NaN();
  const MatrixXd seg = raw_series.segment(origin, h).transpose();
  return cumulate_paths(seg, code)(0, h - 1);
}

VectorXd training_targets(const Eigen::Ref<const VectorXd>& raw_series, int end, int h, TCode code) {
  const int n = std::max(0, end - h + 1);
  VectorXd out(n);
  for (int s = 0; s < n; ++s) out[s] = realized_target(raw_series, s, h, code);
  return out;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::Lv ? "lv" : "benchmark"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "lv") return ModelKind::Lv;
  if (s == "benchmark") return ModelKind::Benchmark;
  throw Error("unknown model '" + s + "'");
}

ForecastRun expanding_window_run(const Panel& panel, const ModelConfig& config, ModelKind model,
                                 const std::vector<int>& origins, const std::vector<int>& h_list,
                                 const ForecastOptions& opts, const BenchmarkConfig& bench,
                                 const ChainHook& hook) {
  if (origins.empty() || h_list.empty()) throw Error("expanding_window_run: no origins or horizons");
  for (std::size_t k = 0; k < origins.size(); ++k) {
    if (k > 0 && origins[k] <= origins[k - 1]) throw Error("origins must be strictly increasing");
    if (origins[k] > panel.n_periods()) throw Error("origin beyond the end of the sample");
  }
  if (origins.front() < 40) throw Error("first origin must leave at least 40 observations");
  for (int h : h_list)
    if (h < 1) throw Error("horizons must be >= 1");
  ForecastRun run;
  run.model = model;
  run.origins = origins;
  run.h_list = h_list;
  run.targets = resolve_targets(opts, panel);
  for (int i : run.targets) {
    run.labels.push_back(panel.labels[i]);
    run.tcodes.push_back(panel.tcodes[i]);
  }
  const MatrixXd raw = panel.raw();
  const int h_max = *std::max_element(h_list.begin(), h_list.end());
  for (std::size_t k = 0; k < origins.size(); ++k) {
    const int o = origins[k];
    OriginForecast of;
    of.origin = o;
    of.realized.resize(h_list.size(), run.targets.size());
    for (std::size_t a = 0; a < h_list.size(); ++a)
      for (std::size_t v = 0; v < run.targets.size(); ++v)
        of.realized(a, v) = realized_target(raw.row(run.targets[v]).transpose(), o, h_list[a], run.tcodes[v]);
    try {
      const Panel train = panel.head(o);
      ModelConfig cfg = config;
      cfg.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(o)});
      ForecastOptions fo = opts;
      fo.targets = run.targets;
      fo.seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(o), 1});
      PredictiveDensity pd;
      if (model == ModelKind::Lv) {
        const Chain chain = estimate_lv(train, cfg);
        if (hook) hook(o, &chain, nullptr);
        pd = predictive_draws(chain, train, h_max, fo);
      } else {
        const BenchmarkChain chain = estimate_benchmark(train, cfg, bench);
        if (hook) hook(o, nullptr, &chain);
        pd = predictive_draws(chain, train, h_max, fo);
      }
      const PredictiveDensity cum = cumulate_growth(pd, run.tcodes);
      for (int h : h_list) {
        PredictiveDensity one = cum;
        one.draws = {cum.draws[h - 1]};
        of.by_horizon.push_back(std::move(one));
      }
    } catch (const Error& err) {
      of.failed = true;
      of.error = err.what();
      of.by_horizon.clear();
    }
    run.results.push_back(std::move(of));
  }
  return run;
}

}  // namespace lvdfm
