#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lvdfm/cli.hpp"
#include "lvdfm/evaluate.hpp"
#include "lvdfm/gibbs.hpp"
#include "lvdfm/simulate.hpp"

namespace py = pybind11;
using namespace lvdfm;

namespace {

py::dict simulate(int n_series, int t_total, int t_burn, std::uint64_t seed) {
  DgpSpec spec = default_dgp();
  spec.n_series = n_series;
  spec.t_total = t_total;
  spec.t_burn = t_burn;
  const Simulation sim = simulate_panel(spec, seed);
  py::dict out;
  out["panel"] = sim.panel.data;
  out["factors"] = sim.truth.factors.path;
  out["b_level"] = sim.truth.b_level;
  out["b_vol"] = sim.truth.b_vol;
  out["rho"] = sim.truth.rho;
  out["nu"] = sim.truth.nu;
  out["labels"] = sim.panel.labels;
  return out;
}

py::dict estimate(const MatrixXd& data, int n_level, int n_vol, int n_draws, int n_burn, int thin,
                  int n_particles, std::uint64_t seed, bool standardize) {
  const int n = static_cast<int>(data.rows());
  const Panel panel = make_panel(data, std::vector<TCode>(n, TCode::None), {}, {}, standardize);
  ModelConfig c;
  c.n_series = n;
  c.n_level = n_level;
  c.n_vol = n_vol;
  c.n_draws = n_draws;
  c.n_burn = n_burn;
  c.thin = thin;
  c.n_particles = n_particles;
  c.seed = seed;
  Chain chain;
  {
    py::gil_scoped_release release;
    chain = estimate_lv(panel, c);
  }
  const auto s = static_cast<Eigen::Index>(chain.draws.size());
  MatrixXd f = MatrixXd::Zero(panel.n_periods(), c.n_factors());
  MatrixXd bl = MatrixXd::Zero(n, n_level), bv = MatrixXd::Zero(n, n_vol), rho = MatrixXd::Zero(n, 1);
  MatrixXd nu(s, n);
  for (Eigen::Index k = 0; k < s; ++k) {
    f += chain.paths[k].path / s;
    bl += chain.draws[k].b_level / s;
    bv += chain.draws[k].b_vol / s;
    rho += chain.draws[k].rho / s;
    nu.row(k) = chain.draws[k].nu.transpose();
  }
  py::dict out;
  out["n_stored"] = s;
  out["factors"] = f;
  out["b_level"] = bl;
  out["b_vol"] = bv;
  out["rho"] = rho;
  out["nu_draws"] = nu;
  out["volload_acceptance"] = chain.diagnostics.volload_acceptance;
  return out;
}

TailWeight make_weight(const std::string& kind, double lo, double hi) {
  if (kind == "full") return TailWeight::full();
  if (kind == "left") return TailWeight::left(lo);
  if (kind == "right") return TailWeight::right(hi);
  if (kind == "band") return TailWeight::band(lo, hi);
  throw Error("unknown weight '" + kind + "'");
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lvdfm");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

PYBIND11_MODULE(_lvdfm, m) {
  m.doc() = "Level-volatility dynamic factor model";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.def("simulate", &simulate, py::arg("n_series") = 100, py::arg("t_total") = 600, py::arg("t_burn") = 100,
        py::arg("seed") = 1);
  m.def("estimate", &estimate, py::arg("data"), py::arg("n_level") = 1, py::arg("n_vol") = 1,
        py::arg("n_draws") = 3000, py::arg("n_burn") = 1000, py::arg("thin") = 1, py::arg("n_particles") = 100,
        py::arg("seed") = 1, py::arg("standardize") = true);

  m.def("crps", [](const VectorXd& draws, double y) { return crps_sample(draws, y); }, py::arg("draws"),
        py::arg("y"));
  m.def(
      "twcrps",
      [](const VectorXd& draws, double y, const std::string& kind, double lo, double hi) {
        return twcrps_sample(draws, y, make_weight(kind, lo, hi));
      },
      py::arg("draws"), py::arg("y"), py::arg("kind") = "full", py::arg("lo") = 0.0, py::arg("hi") = 0.0);
  m.def(
      "dm_test",
      [](const VectorXd& a, const VectorXd& b, int h) {
        const DmResult r = dm_test(a, b, h);
        return py::make_tuple(r.stat, r.p);
      },
      py::arg("loss_a"), py::arg("loss_b"), py::arg("h") = 1);
  m.def("quantile", [](const VectorXd& v, double q) { return empirical_quantile(v, q); }, py::arg("values"),
        py::arg("q"));
  m.def("cli", &run_cli, py::arg("args"), "Runs the command-line interface and returns its exit code.");
}
