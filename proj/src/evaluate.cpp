#include "lvdfm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace lvdfm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> default_grid(double a, double b) {
  std::vector<double> g;
  for (int k = 0; k < 10; ++k) g.push_back(a + (b - a) * k / 9.0);
  return g;
}

}  // namespace

double crps_sample(const Eigen::Ref<const VectorXd>& draws, double y) {
  const Eigen::Index m = draws.size();
  if (m == 0) throw Error("crps_sample: empty draws");
  std::vector<double> x(draws.data(), draws.data() + m);
  std::sort(x.begin(), x.end());
  double abs_term = 0.0;
  double spread = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    abs_term += std::abs(x[i] - y);
    spread += (2.0 * (i + 1) - m - 1.0) * x[i];
  }
  const double md = static_cast<double>(m);
  return abs_term / md - spread / (md * md);
}

double crps_double_sum(const Eigen::Ref<const VectorXd>& draws, double y) {
  const Eigen::Index m = draws.size();
  if (m == 0) throw Error("crps_double_sum: empty draws");
  double a = 0.0, b = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    a += std::abs(draws[i] - y);
    for (Eigen::Index j = 0; j < m; ++j) b += std::abs(draws[i] - draws[j]);
  }
  const double md = static_cast<double>(m);
  return a / md - b / (2.0 * md * md);
}

double twcrps_sample(const Eigen::Ref<const VectorXd>& draws, double y, const TailWeight& weight) {
  const Eigen::Index m = draws.size();
  if (m == 0) throw Error("twcrps_sample: empty draws");
  double a = -std::numeric_limits<double>::infinity();
  double b = std::numeric_limits<double>::infinity();
  switch (weight.kind) {
    case TailWeight::Full: break;
    case TailWeight::Left: b = weight.lo; break;
    case TailWeight::Right: a = weight.hi; break;
    case TailWeight::Band:
      a = weight.lo;
      b = weight.hi;
      break;
  }
  if (!(a < b)) return 0.0;
  std::vector<double> x(draws.data(), draws.data() + m);
  std::sort(x.begin(), x.end());
  const double md = static_cast<double>(m);
  // Walk the merged breakpoints; the integrand is constant between them.
  double total = 0.0;
  std::size_t i = 0;
  bool y_passed = false;
  double prev = std::min(x.front(), y);
  while (i < x.size() || !y_passed) {
    double next;
    bool take_y = !y_passed && (i == x.size() || y <= x[i]);
    next = take_y ? y : x[i];
    const double lo = std::max(prev, a);
    const double hi = std::min(next, b);
    if (hi > lo) {
      const double f = static_cast<double>(i) / md - (y_passed ? 1.0 : 0.0);
      total += f * f * (hi - lo);
    }
    if (take_y) y_passed = true;
    else ++i;
    prev = next;
  }
  return total;
}

double rmse(const Eigen::Ref<const VectorXd>& forecasts, const Eigen::Ref<const VectorXd>& realized) {
  if (forecasts.size() != realized.size()) throw Error("rmse: length mismatch");
  if (forecasts.size() == 0) throw Error("rmse: empty input");
  return std::sqrt((forecasts - realized).squaredNorm() / static_cast<double>(forecasts.size()));
}

DmResult dm_test(const Eigen::Ref<const VectorXd>& loss_a, const Eigen::Ref<const VectorXd>& loss_b,
                 int h) {
  if (loss_a.size() != loss_b.size()) throw Error("dm_test: length mismatch");
  const Eigen::Index n = loss_a.size();
  if (n < 10) throw Error("dm_test: need at least 10 loss pairs");
  if (h < 1) throw Error("dm_test: horizon must be >= 1");
  const VectorXd d = loss_a - loss_b;
  if (d.cwiseAbs().maxCoeff() == 0.0) throw Error("degenerate loss differential");
  const double nd = static_cast<double>(n);
  const double mean = d.mean();
  const VectorXd c = d.array() - mean;
  auto autocov = [&](Eigen::Index k) { return c.head(n - k).dot(c.tail(n - k)) / nd; };
  DmResult out;
  const double gamma0 = autocov(0);
  double lrv = gamma0;
  for (int k = 1; k < h && k < n; ++k) lrv += 2.0 * (1.0 - static_cast<double>(k) / h) * autocov(k);
  if (!(lrv > 0.0)) {
    lrv = gamma0;
    out.lag0_fallback = true;
  }
  if (!(lrv > 0.0)) throw Error("degenerate loss differential");
  const double hd = static_cast<double>(h);
  const double harvey_arg = (nd + 1.0 - 2.0 * hd + hd * (hd - 1.0) / nd) / nd;
  const double harvey = harvey_arg > 0.0 ? std::sqrt(harvey_arg) : 1.0;
  out.stat = harvey * mean / std::sqrt(lrv / nd);
  out.p = 1.0 - normal_cdf(out.stat);
  return out;
}

double pinball_loss(const Eigen::Ref<const VectorXd>& resid, double q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) s += resid[i] >= 0.0 ? q * resid[i] : (q - 1.0) * resid[i];
  return s;
}

double quantile_score(double quantile_forecast, double y, double q) {
  const double u = y - quantile_forecast;
  return u >= 0.0 ? q * u : (q - 1.0) * u;
}

VectorXd fit_quantile_reg(const Eigen::Ref<const VectorXd>& y, const MatrixXd& x, double q) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw Error("fit_quantile_reg: length mismatch");
  if (n <= p) throw Error("fit_quantile_reg: need more observations than regressors");
  if (!(q > 0.0 && q < 1.0)) throw Error("fit_quantile_reg: level must lie in (0, 1)");
  VectorXd b = x.colPivHouseholderQr().solve(y);
  double eps = 1e-2;
  constexpr double kEpsMin = 1e-6;
  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 10000;
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    const VectorXd r = y - x * b;
    VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = (r[i] >= 0.0 ? q : 1.0 - q) / std::max(std::abs(r[i]), eps);
    const MatrixXd xtw = x.transpose() * w.asDiagonal();
    const VectorXd b_new = (xtw * x).ldlt().solve(xtw * y);
    gap = (b_new - b).cwiseAbs().maxCoeff();
    b = b_new;
    if (gap < kTol) {
      if (eps <= kEpsMin) {
        converged = true;
        break;
      }
    }
    eps = std::max(kEpsMin, eps * 0.7);
  }
  if (!converged) throw Error(fmt::format("fit_quantile_reg: no convergence, final gap {:.3g}", gap));

  // Polish: the exact minimizer interpolates p observations. Try subsets of
  // the observations with the smallest residuals.
  double best = pinball_loss(y - x * b, q);
  VectorXd r = (y - x * b).cwiseAbs();
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  const Eigen::Index pool = std::min<Eigen::Index>(n, p + 3);
  std::partial_sort(order.begin(), order.begin() + pool, order.end(),
                    [&](Eigen::Index a, Eigen::Index c) { return r[a] < r[c]; });
  std::vector<bool> pick(pool, false);
  std::fill(pick.begin(), pick.begin() + p, true);
  do {
    MatrixXd xs(p, p);
    VectorXd ys(p);
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < pool; ++k) {
      if (!pick[k]) continue;
      xs.row(row) = x.row(order[k]);
      ys[row] = y[order[k]];
      ++row;
    }
    Eigen::FullPivLU<MatrixXd> lu(xs);
    if (!lu.isInvertible()) continue;
    const VectorXd cand = lu.solve(ys);
    const double loss = pinball_loss(y - x * cand, q);
    if (loss <= best) {
      best = loss;
      b = cand;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return b;
}

double empirical_quantile(VectorXd values, double q) {
  const Eigen::Index n = values.size();
  if (n == 0) throw Error("empirical_quantile: empty sample");
  std::sort(values.data(), values.data() + n);
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const Eigen::Index hi = std::min(lo + 1, n - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void QrSpec::validate() const {
  if (levels.empty()) throw Error("QrSpec: no quantile levels");
  for (double q : levels)
    if (!(q > 0.0 && q < 1.0)) throw Error("QrSpec: levels must lie strictly inside (0, 1)");
  if (lags < 0) throw Error("QrSpec: negative lag order");
}

MatrixXd qr_tail_quantiles(const Eigen::Ref<const VectorXd>& raw_series, TCode code, const QrSpec& spec,
                           const std::vector<int>& origins, int h) {
  spec.validate();
  const int t_len = static_cast<int>(raw_series.size());
  const int n_extra = static_cast<int>(spec.predictors.cols());
  if (n_extra > 0 && spec.predictors.rows() != t_len) throw Error("QrSpec: predictors not aligned with the series");
  const int p = 1 + spec.lags + n_extra;
  auto regressors = [&](int t) {
    VectorXd z(p);
    z[0] = 1.0;
    for (int l = 0; l < spec.lags; ++l) z[1 + l] = raw_series[t - l];
    for (int e = 0; e < n_extra; ++e) z[1 + spec.lags + e] = spec.predictors(t, e);
    return z;
  };
  MatrixXd out(origins.size(), spec.levels.size());
  for (std::size_t k = 0; k < origins.size(); ++k) {
    const int o = origins[k];
    // Pairs (information at t, construct over [t+1, t+h]) inside [0, o).
    const int t_first = std::max(spec.lags - 1, 0);
    const int t_last = o - 1 - h;
    const int n = t_last - t_first + 1;
    if (n <= p) throw Error("qr_tail_quantiles: too few training observations at origin " + std::to_string(o));
    MatrixXd x(n, p);
    VectorXd y(n);
    for (int t = t_first; t <= t_last; ++t) {
      x.row(t - t_first) = regressors(t).transpose();
      y[t - t_first] = realized_target(raw_series, t + 1, h, code);
    }
    const VectorXd z = regressors(o - 1);
    for (std::size_t a = 0; a < spec.levels.size(); ++a)
      out(k, a) = z.dot(fit_quantile_reg(y, x, spec.levels[a]));
  }
  return out;
}

const ScoreRow* ScoreTable::find(const std::string& model, const std::string& target, int horizon,
                                 const std::string& metric) const {
  for (const auto& r : rows)
    if (r.model == model && r.target == target && r.horizon == horizon && r.metric == metric) return &r;
  return nullptr;
}

ScoreTable score_runs(const std::vector<ForecastRun>& runs, int benchmark, const Panel& panel,
                      const ScoreOptions& opts_in) {
  if (runs.empty()) throw Error("score_runs: no forecast runs");
  if (benchmark < 0 || benchmark >= static_cast<int>(runs.size())) throw Error("score_runs: bad benchmark index");
  ScoreOptions opts = opts_in;
  if (opts.left_grid.empty()) opts.left_grid = default_grid(0.01, 0.10);
  if (opts.right_grid.empty()) opts.right_grid = default_grid(0.90, 0.99);
  const ForecastRun& ref = runs[benchmark];
  for (const auto& r : runs)
    if (r.origins != ref.origins || r.h_list != ref.h_list || r.targets != ref.targets)
      throw Error("score_runs: runs are not aligned");
  const MatrixXd raw = panel.raw();
  const std::vector<std::string> metrics{"rmse", "crps", "twcrps_left", "twcrps_right", "qs_left", "qs_right"};

  ScoreTable table;
  for (std::size_t v = 0; v < ref.targets.size(); ++v) {
    const VectorXd series = raw.row(ref.targets[v]).transpose();
    for (std::size_t a = 0; a < ref.h_list.size(); ++a) {
      const int h = ref.h_list[a];
      // Origins scored by every run.
      std::vector<std::size_t> keep;
      for (std::size_t k = 0; k < ref.origins.size(); ++k) {
        bool ok = std::isfinite(ref.results[k].realized(a, v));
        for (const auto& r : runs) ok = ok && !r.results[k].failed;
        if (ok) keep.push_back(k);
      }
      const auto nk = static_cast<Eigen::Index>(keep.size());
      if (nk == 0) continue;
      VectorXd y(nk), lo(nk), hi(nk);
      std::vector<int> kept_origins;
      for (Eigen::Index j = 0; j < nk; ++j) {
        const std::size_t k = keep[j];
        y[j] = ref.results[k].realized(a, v);
        const VectorXd train = training_targets(series, ref.origins[k], h, ref.tcodes[v]);
        lo[j] = empirical_quantile(train, opts.left_quantile);
        hi[j] = empirical_quantile(train, opts.right_quantile);
        kept_origins.push_back(ref.origins[k]);
      }
      // losses[run][metric] per origin.
      std::vector<std::vector<VectorXd>> losses(runs.size(), std::vector<VectorXd>(metrics.size(), VectorXd(nk)));
      std::vector<VectorXd> means(runs.size(), VectorXd(nk));
      for (std::size_t m = 0; m < runs.size(); ++m) {
        for (Eigen::Index j = 0; j < nk; ++j) {
          const VectorXd draws = runs[m].results[keep[j]].by_horizon[a].column(0, static_cast<int>(v));
          means[m][j] = draws.mean();
          losses[m][0][j] = (means[m][j] - y[j]) * (means[m][j] - y[j]);
          losses[m][1][j] = crps_sample(draws, y[j]);
          losses[m][2][j] = twcrps_sample(draws, y[j], TailWeight::left(lo[j]));
          losses[m][3][j] = twcrps_sample(draws, y[j], TailWeight::right(hi[j]));
          double ql = 0.0, qr = 0.0;
          for (double q : opts.left_grid) ql += quantile_score(empirical_quantile(draws, q), y[j], q);
          for (double q : opts.right_grid) qr += quantile_score(empirical_quantile(draws, q), y[j], q);
          losses[m][4][j] = ql / static_cast<double>(opts.left_grid.size());
          losses[m][5][j] = qr / static_cast<double>(opts.right_grid.size());
        }
      }
      auto summary = [&](std::size_t metric, const VectorXd& l) {
        return metric == 0 ? std::sqrt(l.mean()) : l.mean();
      };
      auto emit = [&](const std::string& model, std::size_t metric, const VectorXd& l, bool is_bench) {
        ScoreRow row;
        row.model = model;
        row.target = ref.labels[v];
        row.horizon = h;
        row.metric = metrics[metric];
        row.value = summary(metric, l);
        const VectorXd& lb = losses[benchmark][metric];
        const double bench_value = summary(metric, lb);
        row.ratio = bench_value > 0.0 ? row.value / bench_value : kNaN;
        row.dm_stat = kNaN;
        row.p = kNaN;
        if (!is_bench) {
          try {
            const DmResult dm = dm_test(lb, l, h);
            row.dm_stat = dm.stat;
            row.p = dm.p;
          } catch (const Error&) {
          }
        }
        table.rows.push_back(row);
      };
      for (std::size_t m = 0; m < runs.size(); ++m)
        for (std::size_t metric = 0; metric < metrics.size(); ++metric)
          emit(to_string(runs[m].model), metric, losses[m][metric], static_cast<int>(m) == benchmark);

      if (opts.with_qr) {
        std::vector<double> levels = opts.left_grid;
        levels.insert(levels.end(), opts.right_grid.begin(), opts.right_grid.end());
        QrSpec spec = opts.qr;
        spec.levels = levels;
        try {
          const MatrixXd qf = qr_tail_quantiles(series, ref.tcodes[v], spec, kept_origins, h);
          VectorXd ql(nk), qr(nk);
          const auto nl = opts.left_grid.size();
          for (Eigen::Index j = 0; j < nk; ++j) {
            double sl = 0.0, sr = 0.0;
            for (std::size_t g = 0; g < nl; ++g) sl += quantile_score(qf(j, g), y[j], levels[g]);
            for (std::size_t g = nl; g < levels.size(); ++g) sr += quantile_score(qf(j, g), y[j], levels[g]);
            ql[j] = sl / static_cast<double>(nl);
            qr[j] = sr / static_cast<double>(levels.size() - nl);
          }
          emit("qr", 4, ql, false);
          emit("qr", 5, qr, false);
        } catch (const Error&) {
        }
      }
    }
  }
  return table;
}

std::string to_csv(const ScoreTable& table) {
  auto num = [](double x) { return std::isfinite(x) ? fmt::format("{:.10g}", x) : std::string("NA"); };
  std::string out = "model,target,horizon,metric,value,ratio,dm_stat,p\n";
  for (const auto& r : table.rows)
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.model, r.target, r.horizon, r.metric, num(r.value),
                       num(r.ratio), num(r.dm_stat), num(r.p));
  return out;
}

}  // namespace lvdfm
