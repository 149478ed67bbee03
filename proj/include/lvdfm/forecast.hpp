#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lvdfm/benchmark.hpp"
#include "lvdfm/gibbs.hpp"

namespace lvdfm {

struct PredictiveDensity {
  std::vector<MatrixXd> draws;  // one M x V matrix per horizon step 1..h
  std::vector<std::string> labels;
  std::vector<int> targets;     // panel row of each target
  int origin = 0;               // number of periods in the estimation sample
  bool cumulated = false;
  int skipped = 0;              // stored draws skipped as explosive

  int horizon() const { return static_cast<int>(draws.size()); }
  int n_draws() const { return draws.empty() ? 0 : static_cast<int>(draws[0].rows()); }
  int n_targets() const { return static_cast<int>(targets.size()); }
  double at(int m, int s, int v) const { return draws[s](m, v); }
  // Draws of target v at horizon step s (0-based).
  VectorXd column(int s, int v) const { return draws[s].col(v); }
};

struct ForecastOptions {
  int m_per_draw = 5;
  std::vector<int> targets;  // empty means series 0
  // Shift of the last in-sample factor state, e.g. a volatility shock.
  VectorXd origin_shift;
  std::uint64_t seed = 1;
};

// Shift of F_T by `size` standard deviations of innovation `index`, propagated
// through the innovation covariance: size * Omega_{:,index} / sqrt(Omega_{index,index}).
VectorXd innovation_shift(const MatrixXd& omega, int index, double size);

PredictiveDensity predictive_draws(const Chain& chain, const Panel& panel, int h,
                                   const ForecastOptions& opts);
PredictiveDensity predictive_draws(const BenchmarkChain& chain, const Panel& panel, int h,
                                   const ForecastOptions& opts);

// Sums over horizons (tcode 5), double sums (tcode 6), identity otherwise.
PredictiveDensity cumulate_growth(const PredictiveDensity& density, const std::vector<TCode>& tcodes);
// Same mapping for a matrix of paths (rows = draws, cols = horizon steps).
MatrixXd cumulate_paths(const MatrixXd& paths, TCode code);

// Target construct realized over periods [origin, origin + h) of a raw series.
double realized_target(const Eigen::Ref<const VectorXd>& raw_series, int origin, int h, TCode code);
// All h-period target constructs available in raw_series[0, end).
VectorXd training_targets(const Eigen::Ref<const VectorXd>& raw_series, int end, int h, TCode code);

enum class ModelKind { Lv, Benchmark };
std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct OriginForecast {
  int origin = 0;
  bool failed = false;
  std::string error;
  std::vector<PredictiveDensity> by_horizon;  // cumulated, one per entry of h_list
  MatrixXd realized;                          // |h_list| x V, NaN when beyond the sample
};

struct ForecastRun {
  ModelKind model = ModelKind::Lv;
  std::vector<int> origins;
  std::vector<int> h_list;
  std::vector<int> targets;
  std::vector<std::string> labels;
  std::vector<TCode> tcodes;
  std::vector<OriginForecast> results;
};

using ChainHook = std::function<void(int origin, const Chain*, const BenchmarkChain*)>;

ForecastRun expanding_window_run(const Panel& panel, const ModelConfig& config, ModelKind model,
                                 const std::vector<int>& origins, const std::vector<int>& h_list,
                                 const ForecastOptions& opts, const BenchmarkConfig& bench = {},
                                 const ChainHook& hook = {});

}  // namespace lvdfm
