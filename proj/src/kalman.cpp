#include "lvdfm/kalman.hpp"

#include <vector>

namespace lvdfm {

MatrixXd psd_sqrt(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov + cov.transpose()));
  const VectorXd sd = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * sd.asDiagonal() * eig.eigenvectors().transpose();
}

VectorXd draw_psd(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov + cov.transpose()));
  const VectorXd sd = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const VectorXd z = rng.normal_vector(mean.size());
  return mean + eig.eigenvectors() * sd.cwiseProduct(z);
}

MatrixXd ffbs_draw(const LinearStateSpace& model, Rng& rng) {
  const int m = model.n_factors();
  const int t_len = model.n_periods();
  const int jl = static_cast<int>(model.b_level.cols());
  const int lf = static_cast<int>((model.gamma.rows() - 1) / m);
  const int lv = static_cast<int>(model.rho.cols());
  const int d = std::max(lf, lv + 1);
  const int n = m * d;
  const Eigen::Index n_obs = model.b_level.rows();
  if (t_len < d) throw Error("ffbs_draw: sample shorter than the state window");
  if (model.r.cols() != t_len || model.r.rows() != n_obs) throw Error("ffbs_draw: shape mismatch");

  // Top block row of the companion transition and the intercept.
  MatrixXd top = MatrixXd::Zero(m, n);
  for (int j = 0; j < lf; ++j) top.middleCols(j * m, m) = model.gamma.middleRows(j * m, m).transpose();
  const VectorXd c = model.gamma.row(model.gamma.rows() - 1).transpose();

  MatrixXd z = MatrixXd::Zero(n_obs, n);
  for (Eigen::Index i = 0; i < n_obs; ++i) {
    z.row(i).head(jl) = model.b_level.row(i);
    for (int l = 1; l <= lv; ++l) z.row(i).segment(l * m, jl) = -model.rho(i, l - 1) * model.b_level.row(i);
  }

  std::vector<VectorXd> a_f(t_len);
  std::vector<MatrixXd> p_f(t_len);
  VectorXd a = VectorXd::Zero(n);
  MatrixXd p = MatrixXd::Zero(n, n);
  for (int t = 0; t < t_len; ++t) {
    // Predict.
    VectorXd a_new(n);
    MatrixXd p_new = MatrixXd::Zero(n, n);
    a_new.head(m) = c + top * a;
    a_new.tail(n - m) = a.head(n - m);
    const MatrixXd tp = top * p;  // m x n
    p_new.topLeftCorner(m, m) = tp * top.transpose() + model.omega;
    p_new.block(0, m, m, n - m) = tp.leftCols(n - m);
    p_new.block(m, 0, n - m, m) = tp.leftCols(n - m).transpose();
    p_new.bottomRightCorner(n - m, n - m) = p.topLeftCorner(n - m, n - m);
    a = std::move(a_new);
    p = std::move(p_new);
    // Update.
    if (t >= model.first_obs) {
      const MatrixXd pz = p * z.transpose();
      MatrixXd s = z * pz;
      s.diagonal() += model.r.col(t);
      Eigen::LLT<MatrixXd> llt(s);
      if (llt.info() != Eigen::Success) throw Error("ffbs_draw: innovation covariance not positive definite");
      const VectorXd v = model.x_qd.col(t) - z * a;
      a += pz * llt.solve(v);
      p -= pz * llt.solve(pz.transpose());
      p = 0.5 * (p + p.transpose());
    }
    a_f[t] = a;
    p_f[t] = p;
  }

  MatrixXd out(t_len, m);
  VectorXd s_next = draw_psd(a_f[t_len - 1], p_f[t_len - 1], rng);
  for (int b = 0; b < d; ++b) out.row(t_len - 1 - b) = s_next.segment(b * m, m).transpose();
  const int known = n - m;
  for (int t = t_len - 2; t - d + 1 >= 0; --t) {
    VectorXd mu = a_f[t];
    MatrixXd cov = p_f[t];
    // Condition on F_{t+1} = c + top s_t + e.
    {
      const MatrixXd pm = cov * top.transpose();
      MatrixXd s = top * pm + model.omega;
      Eigen::LLT<MatrixXd> llt(s);
      if (llt.info() != Eigen::Success) throw Error("ffbs_draw: singular transition covariance");
      mu += pm * llt.solve(VectorXd(s_next.head(m) - c - top * mu));
      cov -= pm * llt.solve(pm.transpose());
    }
    // The leading d-1 blocks of s_t are the trailing blocks of s_{t+1}.
    const VectorXd kv = s_next.tail(known);
    const MatrixXd pkk = cov.topLeftCorner(known, known);
    const MatrixXd puk = cov.bottomLeftCorner(m, known);
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(pkk);
    cod.setThreshold(1e-12);
    const VectorXd mu_u = mu.tail(m) + puk * cod.solve(VectorXd(kv - mu.head(known)));
    const MatrixXd cov_u = cov.bottomRightCorner(m, m) - puk * cod.solve(MatrixXd(puk.transpose()));
    const VectorXd u = draw_psd(mu_u, cov_u, rng);
    VectorXd s_t(n);
    s_t << kv, u;
    out.row(t - d + 1) = u.transpose();
    s_next = std::move(s_t);
  }
  return out;
}

}  // namespace lvdfm
