#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "sbm/cli.hpp"
#include "sbm/config.hpp"
#include "sbm/kernels.hpp"
#include "sbm/solver.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::array_t<double> matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t nr = rows.size(), nc = rows.empty() ? 0 : rows.front().size();
  py::array_t<double> a({nr, nc});
  auto m = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) m(i, j) = rows[i][j];
  return a;
}

py::array_t<double> vec(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

std::vector<double> nodes(const sbm::Grid1D& g) {
  std::vector<double> x(g.size);
  for (std::size_t i = 0; i < g.size; ++i) x[i] = g.x(i);
  return x;
}

sbm::SimConfig sim_of(const std::string& config_json) { return sbm::parse_config(json::parse(config_json)).sim; }

}  // namespace

PYBIND11_MODULE(_sbm, m) {
  m.doc() = "Interacting superprocess simulator (native core)";

  py::register_exception<sbm::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<sbm::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<sbm::NumericalAbort>(m, "NumericalAbort", PyExc_ArithmeticError);

  m.def("heat_kernel", &sbm::kernels::heat_kernel, py::arg("t"), py::arg("x"));
  m.def("g_m_coefficient", &sbm::kernels::g_m_coefficient, py::arg("m"), py::arg("x"));
  m.def("weight_j", &sbm::kernels::weight_j, py::arg("x"));
  m.def(
      "h_k",
      [](int k, double x) {
        const auto v = sbm::kernels::h_k(k, x);
        return py::make_tuple(v.value, v.d1, v.d2);
      },
      py::arg("k"), py::arg("x"));

  m.def(
      "validate_config",
      [](const std::string& doc) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& i : sbm::validate_config(json::parse(doc))) out.emplace_back(i.path, i.message);
        return out;
      },
      py::arg("config_json"));

  m.def(
      "simulate",
      [](const std::string& doc, std::uint64_t seed) {
        const auto c = sim_of(doc);
        sbm::DensityTrajectory t;
        {
          py::gil_scoped_release release;
          t = sbm::simulate(c, seed);
        }
        return py::make_tuple(vec(t.times), vec(nodes(t.grid)), matrix(t.fields));
      },
      py::arg("config_json"), py::arg("seed"));

  m.def(
      "simulate_u",
      [](const std::string& doc, std::uint64_t seed) {
        const auto c = sim_of(doc);
        sbm::UTrajectory t;
        {
          py::gil_scoped_release release;
          t = sbm::simulate_u_system(c, seed);
        }
        py::list per_interval;
        const std::size_t n = t.states.empty() ? 0 : t.states.front().intervals();
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<std::vector<double>> rows;
          for (const auto& s : t.states) rows.push_back(s.u[i].values);
          per_interval.append(py::make_tuple(vec(nodes(t.states.front().u[i].grid)), matrix(rows)));
        }
        return py::make_tuple(vec(t.times), per_interval);
      },
      py::arg("config_json"), py::arg("seed"));

  m.def(
      "simulate_total_mass",
      [](double c, double z0, double horizon, double dt, std::uint64_t seed) {
        const auto p = sbm::simulate_total_mass(sbm::RateFunction::constant(c), z0, horizon, dt, seed);
        return py::make_tuple(vec(p.times), vec(p.values));
      },
      py::arg("rate"), py::arg("z0"), py::arg("horizon"), py::arg("dt"), py::arg("seed"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = sbm::cli::run(args, out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"));
}
