#include "lvdfm/random.hpp"

#include <algorithm>
#include <stdexcept>

namespace lvdfm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(seed);
  for (auto c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

Rng::Rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords)
    : Rng(derive_seed(seed, coords)) {}

double Rng::gamma(double shape, double scale) {
  std::gamma_distribution<double> dist(shape, scale);
  return dist(engine_);
}

double Rng::inv_gamma(double scale, double dof) {
  return 1.0 / gamma(0.5 * dof, 2.0 / scale);
}

int Rng::categorical(const Eigen::Ref<const Eigen::VectorXd>& weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::runtime_error("categorical: weights sum to zero");
  double u = uniform() * total;
  const Eigen::Index n = weights.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  // Round-off: return the last index with positive weight.
  for (Eigen::Index i = n - 1; i >= 0; --i)
    if (weights[i] > 0.0) return static_cast<int>(i);
  return static_cast<int>(n - 1);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

}  // namespace lvdfm
