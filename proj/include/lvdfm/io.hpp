#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lvdfm/benchmark.hpp"
#include "lvdfm/evaluate.hpp"
#include "lvdfm/fevd.hpp"
#include "lvdfm/forecast.hpp"
#include "lvdfm/gibbs.hpp"
#include "lvdfm/simulate.hpp"

namespace lvdfm {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Number of leading observations lost by a transformation.
int tcode_loss(TCode code);

// Transformed series, length T - tcode_loss(code). label and dates only feed
// the error message for nonpositive inputs under log codes.
VectorXd apply_tcode(const Eigen::Ref<const VectorXd>& series, TCode code, const std::string& label = "",
                     const std::vector<std::string>& dates = {});

// Period index (year * 4 + quarter - 1) of "1965Q1" or an ISO date "1965-01-01".
int parse_period(const std::string& s);
std::string format_period(int index);

struct RawTable {
  std::vector<std::string> dates;  // quarterly labels
  std::vector<std::string> names;
  MatrixXd values;                 // T x K
  Mask missing;                    // T x K

  void validate() const;
};

RawTable read_table(const fs::path& path);
std::map<std::string, TCode> read_tcode_map(const fs::path& path);

// Applies the codes, aligns on the largest loss, and standardizes. Columns
// absent from a nonempty map are dropped; an empty map keeps every column
// untransformed.
Panel panel_from_table(const RawTable& table, const std::map<std::string, TCode>& tcodes,
                       bool standardize = true);
Panel load_panel(const fs::path& csv, const std::map<std::string, TCode>& tcodes, bool standardize = true);

// Transformed (unstandardized) panel values, one row per period.
void write_panel_csv(const fs::path& path, const Panel& panel);
void write_tcode_csv(const fs::path& path, const Panel& panel);
void write_matrix_csv(const fs::path& path, const MatrixXd& m, const std::vector<std::string>& header = {});
MatrixXd read_matrix_csv(const fs::path& path, bool has_header);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& content);
std::string sha1_hex(const std::string& content);
// Git blob hash of a file's content.
std::string blob_hash(const std::string& content);

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});
Json to_json(const DgpSpec& s);
DgpSpec dgp_from_json(const Json& j, DgpSpec base = default_dgp());
Json to_json(const BenchmarkConfig& b);
BenchmarkConfig benchmark_config_from_json(const Json& j, BenchmarkConfig base = {});

void store_chain(const fs::path& dir, const Chain& chain);
Chain load_chain(const fs::path& dir);
void store_chain(const fs::path& dir, const BenchmarkChain& chain);
BenchmarkChain load_benchmark_chain(const fs::path& dir);
// "lv" or "benchmark"
std::string archive_kind(const fs::path& dir);
std::string archive_hash(const fs::path& dir);

// Forecast files: draws_<model>.csv (origin,origin_date,horizon,target,draw,value),
// realized_<model>.csv and run_<model>.json.
void write_forecast_run(const fs::path& dir, const ForecastRun& run, const Panel& panel);
ForecastRun read_forecast_run(const fs::path& dir, const std::string& model);

std::string format_double(double x);

}  // namespace lvdfm
