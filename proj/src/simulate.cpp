#include "lvdfm/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "lvdfm/kalman.hpp"

namespace lvdfm {

void DgpSpec::validate() const {
  const int m = n_factors();
  if (n_series < 1 || n_level < 0 || n_vol < 0 || m < 1) throw Error("DgpSpec: bad dimensions");
  if (identity_blocks && (n_series < n_level || n_series < n_vol))
    throw Error("DgpSpec: fewer series than factors");
  if (t_burn < 0 || t_burn >= t_total) throw Error("DgpSpec: T_burn must be below T_total");
  if (phi.rows() != m || phi.cols() != m || sigma.rows() != m || sigma.cols() != m)
    throw Error("DgpSpec: phi and sigma must be m x m");
  if (intercept.size() != 0 && intercept.size() != m) throw Error("DgpSpec: intercept length");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw Error("DgpSpec: sigma not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma);
  if (eig.eigenvalues().minCoeff() < -1e-12) throw Error("DgpSpec: sigma not positive semidefinite");
  if (phi.eigenvalues().cwiseAbs().maxCoeff() >= 1.0) throw Error("DgpSpec: nonstationary factor VAR");
  if (!(rho_lo <= rho_hi) || std::abs(rho_lo) >= 1.0 || std::abs(rho_hi) >= 1.0)
    throw Error("DgpSpec: bad rho range");
  if (nu_lo < 1 || nu_hi < nu_lo) throw Error("DgpSpec: bad nu range");
  if (loading_law != "normal" && loading_law != "fixed") throw Error("DgpSpec: unknown loading law " + loading_law);
}

DgpSpec default_dgp() {
  DgpSpec s;
  s.phi.resize(2, 2);
  s.phi << 0.9, -0.1, 0.1, 0.9;
  s.sigma.resize(2, 2);
  s.sigma << 0.2, 0.02, 0.02, 0.2;
  return s;
}

std::string quarter_label(int offset, int start_year) {
  const int year = start_year + offset / 4;
  return std::to_string(year) + "Q" + std::to_string(offset % 4 + 1);
}

void ldl_factor(const MatrixXd& omega, MatrixXd& a_mat, VectorXd& h_diag) {
  Eigen::LLT<MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw Error("ldl_factor: Omega is not positive definite");
  const MatrixXd l = llt.matrixL();
  const VectorXd d = l.diagonal();
  const MatrixXd unit_l = l * d.cwiseInverse().asDiagonal();
  a_mat = unit_l.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(omega.rows(), omega.cols()));
  h_diag = d.cwiseAbs2();
}

ParamDraw GroundTruth::params() const {
  ParamDraw p;
  p.gamma = gamma;
  ldl_factor(omega, p.a_mat, p.h_diag);
  p.b_level = b_level;
  p.b_vol = b_vol;
  p.rho = rho;
  p.lambda = lambda;
  p.nu = nu;
  return p;
}

Simulation simulate_panel(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n_series;
  const int jl = spec.n_level;
  const int kv = spec.n_vol;
  const int m = spec.n_factors();
  const int t_all = spec.t_total;
  const int t0 = spec.t_burn;
  const int t_len = t_all - t0;
  const VectorXd c = spec.intercept.size() == m ? spec.intercept : VectorXd::Zero(m);

  // Factor path.
  MatrixXd f_all(t_all, m);
  {
    Rng rng(seed, {0});
    VectorXd prev = VectorXd::Zero(m);
    for (int t = 0; t < t_all; ++t) {
      prev = draw_psd(c + spec.phi * prev, spec.sigma, rng);
      f_all.row(t) = prev.transpose();
    }
  }

  GroundTruth truth;
  truth.b_level = MatrixXd::Zero(n, jl);
  truth.b_vol = MatrixXd::Zero(n, kv);
  truth.rho.resize(n, 1);
  truth.nu.resize(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, {1, static_cast<std::uint64_t>(i)});
    for (int j = 0; j < jl; ++j)
      truth.b_level(i, j) = spec.loading_law == "normal" ? spec.loading_scale * rng.normal() : spec.loading_scale;
    for (int j = 0; j < kv; ++j)
      truth.b_vol(i, j) = spec.loading_law == "normal" ? spec.loading_scale * rng.normal() : spec.loading_scale;
    truth.rho(i, 0) = spec.rho_lo + (spec.rho_hi - spec.rho_lo) * rng.uniform();
    std::uniform_int_distribution<int> nu_dist(spec.nu_lo, spec.nu_hi);
    truth.nu[i] = nu_dist(rng.engine());
  }
  if (spec.identity_blocks) {
    for (int i = 0; i < jl; ++i) {
      truth.b_level.row(i).setZero();
      truth.b_level(i, i) = 1.0;
    }
    for (int i = 0; i < kv; ++i) {
      truth.b_vol.row(i).setZero();
      truth.b_vol(i, i) = 1.0;
    }
  }

  MatrixXd x(n, t_len);
  truth.lambda.resize(n, t_len);
  truth.r.resize(n, t_len);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, {2, static_cast<std::uint64_t>(i)});
    const double nu = truth.nu[i];
    double v = 0.0;
    for (int t = 0; t < t_all; ++t) {
      const double lam = rng.gamma(0.5 * nu, 2.0 / nu);
      const double r = idio_variance(truth.b_vol.row(i).transpose(), f_all.row(t).tail(kv).transpose(), lam);
      v = truth.rho(i, 0) * v + std::sqrt(r) * rng.normal();
      if (t < t0) continue;
      truth.lambda(i, t - t0) = lam;
      truth.r(i, t - t0) = r;
      x(i, t - t0) = truth.b_level.row(i).dot(f_all.row(t).head(jl)) + v;
    }
  }

  truth.factors.path = f_all.bottomRows(t_len);
  truth.factors.n_level = jl;
  truth.gamma.resize(m + 1, m);
  truth.gamma.topRows(m) = spec.phi.transpose();
  truth.gamma.row(m) = c.transpose();
  truth.omega = spec.sigma;

  std::vector<std::string> labels, dates;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03d", i + 1);
    labels.emplace_back(buf);
  }
  for (int t = 0; t < t_len; ++t) dates.push_back(quarter_label(t));
  Simulation out{make_panel(x, std::vector<TCode>(n, TCode::None), labels, dates, false), std::move(truth)};
  return out;
}

}  // namespace lvdfm
