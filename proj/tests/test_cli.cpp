#include <cstdlib>

#include <gtest/gtest.h>

#include "lvdfm/cli.hpp"
#include "lvdfm/io.hpp"

using namespace lvdfm;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "lvdfm");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / (std::string("lvdfm_cli_") +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = (root_ / "config.json").string();
    write_file(config_, R"({"dgp": {"n_series": 6, "t_total": 150, "t_burn": 50},
 "model": {"n_draws": 12, "n_burn": 6, "n_particles": 8},
 "forecast": {"m_per_draw": 2},
 "fevd": {"n_origins": 2, "max_draws": 3}})");
    unsetenv("LVDFM_SEED");
  }
  void TearDown() override {
    fs::remove_all(root_);
    unsetenv("LVDFM_SEED");
  }
  std::string path(const std::string& rel) const { return (root_ / rel).string(); }
  void simulate() { ASSERT_EQ(run({"simulate", "--config", config_, "--seed", "1", "--out", path("sim")}), 0); }

  fs::path root_;
  std::string config_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"bogus"}), 2);
  EXPECT_EQ(run({"estimate"}), 2);
  EXPECT_EQ(run({"estimate", "--panel", "x.csv", "--model", "arima"}), 2);
  EXPECT_EQ(run({"--threads", "0", "simulate"}), 2);
  ::testing::internal::GetCapturedStderr();
  ::testing::internal::GetCapturedStdout();
}

TEST_F(Cli, HelpExitsZero) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(run({"--help"}), 0);
  const std::string out = ::testing::internal::GetCapturedStdout();
  EXPECT_NE(out.find("simulate"), std::string::npos);
}

TEST_F(Cli, RuntimeErrorsExitOneWithMessage) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"estimate", "--panel", path("missing.csv"), "--out", path("o")}), 1);
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(err.rfind("lvdfm: error: ", 0), 0u);
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
  write_file(path("bad.json"), R"({"modle": {}})");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"simulate", "--config", path("bad.json"), "--out", path("s")}), 1);
  ::testing::internal::GetCapturedStderr();
}

TEST_F(Cli, SimulateWritesTruth) {
  simulate();
  for (const char* f : {"panel.csv", "tcodes.csv", "dgp.json", "truth/factors.csv", "truth/b_vol.csv", "truth/nu.csv"})
    EXPECT_TRUE(fs::exists(root_ / "sim" / f)) << f;
  const Panel p = load_panel(path("sim/panel.csv"), read_tcode_map(path("sim/tcodes.csv")), false);
  EXPECT_EQ(p.n_series(), 6);
  EXPECT_EQ(p.n_periods(), 100);
}

TEST_F(Cli, EstimateSeedPrecedence) {
  simulate();
  const std::string panel = path("sim/panel.csv");
  ASSERT_EQ(run({"estimate", "--config", config_, "--seed", "4", "--panel", panel, "--out", path("a")}), 0);
  ASSERT_EQ(run({"estimate", "--config", config_, "--seed", "4", "--panel", panel, "--out", path("b")}), 0);
  EXPECT_EQ(archive_hash(path("a")), archive_hash(path("b")));
  setenv("LVDFM_SEED", "99", 1);
  ASSERT_EQ(run({"estimate", "--config", config_, "--panel", panel, "--out", path("c")}), 0);
  ASSERT_EQ(run({"estimate", "--config", config_, "--seed", "4", "--panel", panel, "--out", path("d")}), 0);
  EXPECT_NE(archive_hash(path("a")), archive_hash(path("c")));
  EXPECT_EQ(archive_hash(path("a")), archive_hash(path("d")));
  EXPECT_EQ(load_chain(path("c")).config.seed, 99u);
}

TEST_F(Cli, ForecastEvaluateFevd) {
  simulate();
  const std::string panel = path("sim/panel.csv");
  ASSERT_EQ(run({"estimate", "--config", config_, "--seed", "2", "--panel", panel, "--out", path("lv")}), 0);
  ASSERT_EQ(run({"forecast", "--config", config_, "--panel", panel, "--archive", path("lv"), "--horizons", "1,2",
                 "--out", path("fa")}),
            0);
  const ForecastRun fa = read_forecast_run(path("fa"), "lv");
  EXPECT_EQ(fa.origins, std::vector<int>{100});
  EXPECT_TRUE(std::isnan(fa.results[0].realized(0, 0)));
  for (const char* model : {"lv", "benchmark"})
    ASSERT_EQ(run({"forecast", "--config", config_, "--panel", panel, "--model", model, "--origins",
                   "60,63,66,69,72,75,78,81,84,87,90", "--horizons", "1", "--chains", path("chains"), "--out",
                   path("fc")}),
              0);
  EXPECT_TRUE(fs::exists(root_ / "chains" / "lv_60" / "manifest.json"));
  ASSERT_EQ(run({"evaluate", "--panel", panel, "--forecasts", path("fc"), "--out", path("ev")}), 0);
  const std::string scores = read_file(path("ev/scores.csv"));
  EXPECT_NE(scores.find("twcrps_left"), std::string::npos);
  EXPECT_NE(scores.find("qr"), std::string::npos);
  ASSERT_EQ(run({"fevd", "--config", config_, "--panel", panel, "--archive", path("lv"), "--series", "0,2",
                 "--horizon", "3", "--sims", "20", "--out", path("fe")}),
            0);
  EXPECT_TRUE(fs::exists(root_ / "fe" / "fevd.csv"));
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"fevd", "--panel", panel, "--archive", path("nowhere"), "--out", path("fe2")}), 1);
  ::testing::internal::GetCapturedStderr();
}

TEST_F(Cli, GroupedEstimate) {
  simulate();
  write_file(path("groups.csv"), "series,group\nS001,AE\nS002,AE\nS003,EMDE\nS004,AE\nS005,EMDE\nS006,EMDE\n");
  ASSERT_EQ(run({"estimate", "--config", config_, "--seed", "3", "--panel", path("sim/panel.csv"), "--groups",
                 path("groups.csv"), "--out", path("g")}),
            0);
  const Chain c = load_chain(path("g"));
  EXPECT_EQ(c.config.n_level, 3);
  EXPECT_EQ(c.draws[0].b_level(2, 1), 0.0);
  write_file(path("badgroups.csv"), "series,group\nS001,XX\n");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"estimate", "--config", config_, "--panel", path("sim/panel.csv"), "--groups", path("badgroups.csv"),
                 "--out", path("g2")}),
            1);
  ::testing::internal::GetCapturedStderr();
}

TEST_F(Cli, DefaultConfigSimulateIsReproducible) {
  ASSERT_EQ(run({"simulate", "--config", "default", "--seed", "7", "--out", path("d1")}), 0);
  ASSERT_EQ(run({"simulate", "--config", "default", "--seed", "7", "--out", path("d2")}), 0);
  EXPECT_TRUE(fs::exists(root_ / "d1" / "panel.csv"));
  EXPECT_TRUE(fs::is_directory(root_ / "d1" / "truth"));
  for (const char* f : {"panel.csv", "truth/factors.csv", "truth/b_level.csv", "truth/nu.csv"})
    EXPECT_EQ(blob_hash(read_file(root_ / "d1" / f)), blob_hash(read_file(root_ / "d2" / f))) << f;
  ASSERT_EQ(run({"simulate", "--config", "default", "--seed", "8", "--out", path("d3")}), 0);
  EXPECT_NE(blob_hash(read_file(path("d1/panel.csv"))), blob_hash(read_file(path("d3/panel.csv"))));
}
