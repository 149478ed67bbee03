#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace lvdfm {

// Mixes a base seed with a tuple of stream coordinates (iteration, block,
// series, ...) into a 64-bit seed. Streams derived from distinct coordinates
// are independent for practical purposes, so results do not depend on the
// order in which workers consume them.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1);
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Gamma with shape k and scale theta (mean k * theta).
  double gamma(double shape, double scale);
  // Inverse-gamma draw parameterized by scale s and degrees of freedom d:
  // 1 / Gamma(d / 2, rate = s / 2), mean s / (d - 2).
  double inv_gamma(double scale, double dof);
  // Index drawn proportionally to the (unnormalized, nonnegative) weights.
  int categorical(const Eigen::Ref<const Eigen::VectorXd>& weights);

  Eigen::VectorXd normal_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lvdfm
