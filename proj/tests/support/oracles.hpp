#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "lvdfm/kalman.hpp"

namespace lvdfm::testing {

struct GaussianMoments {
  MatrixXd mean;  // T x m
  MatrixXd var;   // T x m, marginal variances
  MatrixXd cov;   // Tm x Tm joint covariance, time-major
};

// Exact smoothing moments of the linear-Gaussian model by dense precision
// assembly over the whole path.
inline GaussianMoments dense_smoother(const LinearStateSpace& s) {
  const int m = s.n_factors();
  const int t_len = s.n_periods();
  const int lags = static_cast<int>((s.gamma.rows() - 1) / m);
  const int jl = static_cast<int>(s.b_level.cols());
  const int lv = static_cast<int>(s.rho.cols());
  const int dim = m * t_len;
  MatrixXd q = MatrixXd::Zero(dim, dim);
  VectorXd b = VectorXd::Zero(dim);
  const MatrixXd oinv = s.omega.inverse();
  const VectorXd c = s.gamma.row(s.gamma.rows() - 1).transpose();
  for (int t = 0; t < t_len; ++t) {
    // e_t = S z - c
    MatrixXd sel = MatrixXd::Zero(m, dim);
    sel.block(0, t * m, m, m) = MatrixXd::Identity(m, m);
    for (int j = 1; j <= lags; ++j)
      if (t - j >= 0) sel.block(0, (t - j) * m, m, m) -= s.gamma.block((j - 1) * m, 0, m, m).transpose();
    q += sel.transpose() * oinv * sel;
    b += sel.transpose() * oinv * c;
  }
  for (int t = s.first_obs; t < t_len; ++t) {
    for (int i = 0; i < s.b_level.rows(); ++i) {
      VectorXd a = VectorXd::Zero(dim);
      for (int j = 0; j < jl; ++j) {
        a[t * m + j] += s.b_level(i, j);
        for (int l = 1; l <= lv; ++l)
          if (t - l >= 0) a[(t - l) * m + j] -= s.rho(i, l - 1) * s.b_level(i, j);
      }
      q += a * a.transpose() / s.r(i, t);
      b += a * s.x_qd(i, t) / s.r(i, t);
    }
  }
  GaussianMoments out;
  out.cov = q.inverse();
  const VectorXd mu = q.ldlt().solve(b);
  out.mean.resize(t_len, m);
  out.var.resize(t_len, m);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < m; ++j) {
      out.mean(t, j) = mu[t * m + j];
      out.var(t, j) = out.cov(t * m + j, t * m + j);
    }
  return out;
}

inline double correlation(const VectorXd& a, const VectorXd& b) {
  const VectorXd ac = a.array() - a.mean();
  const VectorXd bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

// Standard error of the mean of a correlated series by non-overlapping batch means.
inline double batch_means_se(const VectorXd& x, int n_batches = 40) {
  const auto n = x.size();
  const auto len = n / n_batches;
  VectorXd means(n_batches);
  for (int k = 0; k < n_batches; ++k) means[k] = x.segment(k * len, len).mean();
  const double mu = means.mean();
  return std::sqrt((means.array() - mu).square().sum() / (n_batches - 1) / n_batches);
}

// Standard error of the mean of a correlated series from the integrated
// autocorrelation time, truncated by Geyer's initial positive sequence.
inline double mcmc_se(const VectorXd& x) {
  const auto n = x.size();
  const VectorXd c = x.array() - x.mean();
  const double c0 = c.squaredNorm() / n;
  if (!(c0 > 0.0)) return 0.0;
  auto acf = [&](Eigen::Index k) { return c.head(n - k).dot(c.tail(n - k)) / n / c0; };
  double tau = -1.0;
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = acf(2 * k) + acf(2 * k + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::sqrt(c0 * std::max(tau, 1.0) / n);
}

inline double sorted_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// CRPS of N(mu, sigma^2) at y.
inline double gaussian_crps(double mu, double sigma, double y) {
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(M_PI));
}

}  // namespace lvdfm::testing
