#include "lvdfm/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lvdfm/io.hpp"

namespace lvdfm {

namespace {

struct Globals {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out = ".";
  bool standardize = true;
};

struct PanelArgs {
  std::string panel;
  std::string tcodes;
};

Json load_config(const std::string& path) {
  if (path.empty() || path == "default") return Json::object();
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error("cannot parse config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config must be a JSON object");
  static const std::vector<std::string> sections{"model", "dgp", "benchmark", "forecast", "fevd", "evaluate"};
  for (const auto& [key, value] : j.items())
    if (std::find(sections.begin(), sections.end(), key) == sections.end())
      throw Error("unknown config section '" + key + "'");
  return j;
}

Json section(const Json& cfg, const char* name) { return cfg.contains(name) ? cfg.at(name) : Json::object(); }

// --seed beats LVDFM_SEED, which beats the config file.
std::optional<std::uint64_t> resolve_seed(const Globals& g) {
  if (g.seed) return g.seed;
  if (const char* env = std::getenv("LVDFM_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw Error(std::string("LVDFM_SEED is not an integer: ") + env);
    return v;
  }
  return std::nullopt;
}

Panel read_panel(const PanelArgs& p, const Globals& g) {
  std::map<std::string, TCode> codes;
  if (!p.tcodes.empty()) codes = read_tcode_map(p.tcodes);
  return load_panel(p.panel, codes, g.standardize);
}

ModelConfig model_config(const Json& cfg, const Globals& g, const Panel& panel) {
  ModelConfig c = model_config_from_json(section(cfg, "model"));
  c.n_series = panel.n_series();
  if (auto s = resolve_seed(g)) c.seed = *s;
  return c;
}

GroupMask read_groups(const std::string& path, const Panel& panel) {
  std::map<std::string, bool> adv;
  std::istringstream in(read_file(path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(path + ": expected 'series,group' rows");
    const std::string name = line.substr(0, comma);
    std::string grp = line.substr(comma + 1);
    std::transform(grp.begin(), grp.end(), grp.begin(), ::toupper);
    if (first && name == "series") {
      first = false;
      continue;
    }
    first = false;
    if (grp == "AE") adv[name] = true;
    else if (grp == "EMDE") adv[name] = false;
    else throw Error(path + ": group must be AE or EMDE, got '" + grp + "'");
  }
  GroupMask mask;
  for (const auto& label : panel.labels) {
    auto it = adv.find(label);
    if (it == adv.end()) throw Error("series '" + label + "' has no group in " + path);
    mask.advanced.push_back(it->second);
  }
  return mask;
}

std::string progress_line(int it, int total) { return fmt::format("\riteration {}/{}", it, total); }

ProgressFn progress_fn(bool verbose) {
  if (!verbose) return {};
  return [](int it, int total) {
    if (it % 50 == 0 || it == total) std::cerr << progress_line(it, total) << (it == total ? "\n" : "") << std::flush;
  };
}

void write_truth(const fs::path& dir, const Simulation& sim) {
  const GroundTruth& t = sim.truth;
  std::vector<std::string> fh;
  for (int j = 0; j < t.factors.n_level; ++j) fh.push_back(fmt::format("f{}", j + 1));
  for (int j = 0; j < t.factors.n_vol(); ++j) fh.push_back(fmt::format("vol{}", j + 1));
  write_matrix_csv(dir / "factors.csv", t.factors.path, fh);
  write_matrix_csv(dir / "b_level.csv", t.b_level);
  write_matrix_csv(dir / "b_vol.csv", t.b_vol);
  write_matrix_csv(dir / "rho.csv", t.rho);
  write_matrix_csv(dir / "nu.csv", t.nu);
  write_matrix_csv(dir / "lambda.csv", t.lambda);
  write_matrix_csv(dir / "r.csv", t.r);
  write_matrix_csv(dir / "gamma.csv", t.gamma);
  write_matrix_csv(dir / "omega.csv", t.omega);
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Level-volatility dynamic factor model"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration, or 'default'");
  app.add_option("--seed", g.seed, "random seed (overrides LVDFM_SEED and the config)");
  app.add_option("--threads", g.threads, "worker cap")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--standardize", g.standardize, "standardize panels on load (default true)");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "report sampler progress on stderr");

  auto* sim = app.add_subcommand("simulate", "simulate a panel and its ground truth");

  PanelArgs est_panel;
  std::string est_model = "lv", est_groups;
  auto* est = app.add_subcommand("estimate", "run the Gibbs sampler and store the chain");
  est->add_option("--panel", est_panel.panel, "panel CSV")->required();
  est->add_option("--tcodes", est_panel.tcodes, "series,tcode map");
  est->add_option("--model", est_model, "lv or benchmark")->check(CLI::IsMember({"lv", "benchmark"}));
  est->add_option("--groups", est_groups, "series,group map (AE/EMDE) for the regional model")
      ;

  PanelArgs fc_panel;
  std::string fc_archive, fc_model = "lv", fc_chains;
  std::vector<int> fc_origins, fc_horizons{1}, fc_targets;
  int fc_m = -1;
  auto* fc = app.add_subcommand("forecast", "predictive draws from a stored chain or an expanding window");
  fc->add_option("--panel", fc_panel.panel, "panel CSV")->required();
  fc->add_option("--tcodes", fc_panel.tcodes, "series,tcode map");
  fc->add_option("--archive", fc_archive, "chain archive");
  fc->add_option("--model", fc_model, "lv or benchmark (expanding window)")
      ->check(CLI::IsMember({"lv", "benchmark"}));
  fc->add_option("--origins", fc_origins, "estimation sample sizes for the expanding window")->delimiter(',');
  fc->add_option("--horizons", fc_horizons, "forecast horizons")->delimiter(',');
  fc->add_option("--targets", fc_targets, "panel rows to forecast")->delimiter(',');
  fc->add_option("--draws-per-param", fc_m, "simulated paths per stored draw");
  fc->add_option("--chains", fc_chains, "directory to persist expanding-window chains");

  PanelArgs ev_panel;
  std::string ev_forecasts;
  std::vector<std::string> ev_models{"benchmark", "lv"};
  bool ev_no_qr = false;
  auto* ev = app.add_subcommand("evaluate", "score forecast draws against realized values");
  ev->add_option("--panel", ev_panel.panel, "panel CSV")->required();
  ev->add_option("--tcodes", ev_panel.tcodes, "series,tcode map");
  ev->add_option("--forecasts", ev_forecasts, "directory written by forecast")->required()
      ;
  ev->add_option("--models", ev_models, "models to score; 'benchmark' is the reference")->delimiter(',');
  ev->add_flag("--no-qr", ev_no_qr, "skip the quantile-regression comparison");

  PanelArgs fv_panel;
  std::string fv_archive, fv_groups;
  std::vector<int> fv_series;
  int fv_h = -1, fv_sims = -1;
  auto* fv = app.add_subcommand("fevd", "forecast-error variance decomposition from a grouped chain");
  fv->add_option("--panel", fv_panel.panel, "panel CSV")->required();
  fv->add_option("--tcodes", fv_panel.tcodes, "series,tcode map");
  fv->add_option("--archive", fv_archive, "chain archive")->required();
  fv->add_option("--groups", fv_groups, "series,group map used at estimation");
  fv->add_option("--series", fv_series, "panel rows to decompose (default all)")->delimiter(',');
  fv->add_option("--horizon", fv_h, "maximum horizon");
  fv->add_option("--sims", fv_sims, "simulations per origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const Json cfg = load_config(g.config);
    const fs::path out(g.out);
    fs::create_directories(out);

    if (sim->parsed()) {
      const DgpSpec spec = dgp_from_json(section(cfg, "dgp"));
      const std::uint64_t seed = resolve_seed(g).value_or(section(cfg, "model").value("seed", std::uint64_t{1}));
      const Simulation s = simulate_panel(spec, seed);
      write_panel_csv(out / "panel.csv", s.panel);
      write_tcode_csv(out / "tcodes.csv", s.panel);
      write_truth(out / "truth", s);
      write_file(out / "dgp.json", Json{{"seed", seed}, {"dgp", to_json(spec)}}.dump(2) + "\n");
    } else if (est->parsed()) {
      const Panel panel = read_panel(est_panel, g);
      ModelConfig config = model_config(cfg, g, panel);
      if (!est_groups.empty()) read_groups(est_groups, panel).configure(config);
      if (est_model == "lv") {
        store_chain(out, estimate_lv(panel, config, progress_fn(verbose)));
      } else {
        const BenchmarkConfig bench = benchmark_config_from_json(section(cfg, "benchmark"));
        store_chain(out, estimate_benchmark(panel, config, bench, progress_fn(verbose)));
      }
      if (verbose) std::cerr << "archive " << archive_hash(out) << "\n";
    } else if (fc->parsed()) {
      const Panel panel = read_panel(fc_panel, g);
      const Json fs_cfg = section(cfg, "forecast");
      ForecastOptions opts;
      opts.m_per_draw = fs_cfg.value("m_per_draw", opts.m_per_draw);
      if (fc_m > 0) opts.m_per_draw = fc_m;
      opts.targets = fc_targets.empty() ? fs_cfg.value("targets", std::vector<int>{}) : fc_targets;
      if (auto s = resolve_seed(g)) opts.seed = *s;
      else opts.seed = section(cfg, "model").value("seed", std::uint64_t{1});
      if (fc_horizons.empty()) throw Error("no horizons given");
      ForecastRun run;
      if (!fc_archive.empty()) {
        // Forecast from the end of the panel with a stored chain.
        const std::string kind = archive_kind(fc_archive);
        run.model = parse_model_kind(kind);
        const int h_max = *std::max_element(fc_horizons.begin(), fc_horizons.end());
        PredictiveDensity pd = kind == "lv" ? predictive_draws(load_chain(fc_archive), panel, h_max, opts)
                                            : predictive_draws(load_benchmark_chain(fc_archive), panel, h_max, opts);
        run.origins = {panel.n_periods()};
        run.h_list = fc_horizons;
        run.targets = pd.targets;
        run.labels = pd.labels;
        for (int i : pd.targets) run.tcodes.push_back(panel.tcodes[i]);
        const PredictiveDensity cum = cumulate_growth(pd, run.tcodes);
        OriginForecast of;
        of.origin = panel.n_periods();
        of.realized = MatrixXd::Constant(fc_horizons.size(), pd.targets.size(),
                                         std::numeric_limits<double>::quiet_NaN());
        for (int h : fc_horizons) {
          PredictiveDensity one = cum;
          one.draws = {cum.draws[h - 1]};
          of.by_horizon.push_back(std::move(one));
        }
        run.results.push_back(std::move(of));
      } else {
        if (fc_origins.empty()) throw Error("forecast needs --archive or --origins");
        const ModelConfig config = model_config(cfg, g, panel);
        const BenchmarkConfig bench = benchmark_config_from_json(section(cfg, "benchmark"));
        ChainHook hook;
        if (!fc_chains.empty()) {
          hook = [&](int o, const Chain* c, const BenchmarkChain* b) {
            const fs::path dir = fs::path(fc_chains) / fmt::format("{}_{}", fc_model, o);
            if (c) store_chain(dir, *c);
            if (b) store_chain(dir, *b);
          };
        }
        run = expanding_window_run(panel, config, parse_model_kind(fc_model), fc_origins, fc_horizons, opts,
                                   bench, hook);
        for (const auto& of : run.results)
          if (of.failed) std::cerr << "origin " << of.origin << " failed: " << one_line(of.error) << "\n";
      }
      write_forecast_run(out, run, panel);
    } else if (ev->parsed()) {
      const Panel panel = read_panel(ev_panel, g);
      std::vector<ForecastRun> runs;
      int bench_idx = 0;
      for (std::size_t k = 0; k < ev_models.size(); ++k) {
        runs.push_back(read_forecast_run(ev_forecasts, ev_models[k]));
        if (ev_models[k] == "benchmark") bench_idx = static_cast<int>(k);
      }
      ScoreOptions so;
      const Json ec = section(cfg, "evaluate");
      so.left_quantile = ec.value("left_quantile", so.left_quantile);
      so.right_quantile = ec.value("right_quantile", so.right_quantile);
      so.with_qr = !ev_no_qr && ec.value("with_qr", so.with_qr);
      so.qr.lags = ec.value("qr_lags", so.qr.lags);
      write_file(out / "scores.csv", to_csv(score_runs(runs, bench_idx, panel, so)));
    } else if (fv->parsed()) {
      const Panel panel = read_panel(fv_panel, g);
      const Chain chain = load_chain(fv_archive);
      if (chain.config.n_series != panel.n_series()) throw Error("archive and panel have different series counts");
      if (!fv_groups.empty()) {
        ModelConfig check = chain.config;
        read_groups(fv_groups, panel).configure(check);
        if (check.level_anchors != chain.config.level_anchors)
          throw Error("group map does not match the archive's grouping");
      }
      const Json fc_cfg = section(cfg, "fevd");
      FevdOptions fo;
      fo.horizon = fc_cfg.value("horizon", fo.horizon);
      fo.n_sims = fc_cfg.value("n_sims", fo.n_sims);
      fo.n_origins = fc_cfg.value("n_origins", fo.n_origins);
      fo.max_draws = fc_cfg.value("max_draws", fo.max_draws);
      fo.ordering = fc_cfg.value("ordering", fo.ordering);
      if (fv_h > 0) fo.horizon = fv_h;
      if (fv_sims > 0) fo.n_sims = fv_sims;
      fo.seed = resolve_seed(g).value_or(chain.config.seed);
      std::vector<int> series = fv_series;
      if (series.empty())
        for (int i = 0; i < panel.n_series(); ++i) series.push_back(i);
      write_file(out / "fevd.csv", to_csv(fevd_chain(chain, panel, series, fo)));
    }
  } catch (const std::exception& e) {
    std::cerr << "lvdfm: error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace lvdfm
