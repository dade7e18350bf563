// Python module. Topologies, scenarios and reports cross the boundary as JSON
// strings; matrices and vectors as NumPy arrays.

#include "lbgnn/gradcheck.hpp"
#include "lbgnn/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace lbgnn;
using nlohmann::json;

namespace {

Topology topology_arg(const std::string& text) { return topology_from_json(json::parse(text)); }

json run_to_json(const RunResult& r, const SummaryOptions& options) {
  json j;
  j["t"] = r.t;
  j["diverged"] = r.diverged;
  j["diverged_at"] = r.diverged_at;
  j["failure"] = r.failure;
  j["max_theta1_sq"] = r.max_theta1_sq;
  j["max_theta2_sq"] = r.max_theta2_sq;
  j["projection_limit"] = r.projection_limit;
  j["wall_seconds"] = r.wall_seconds;
  j["certificate"] = to_json(r.certificate);
  if (!r.diverged) j["summary"] = to_json(summarize(r, options));
  return j;
}

}  // namespace

PYBIND11_MODULE(_lbgnn, m) {
  m.doc() = "Graph-network observer and controller for multi-agent target tracking";

  m.def("build_topology", [](const std::string& kind, int n) {
    return to_json(build_topology(topology_kind_from_string(kind), n)).dump();
  });
  m.def("pinned_laplacian", [](const std::string& t) { return pinned_laplacian(topology_arg(t)); });
  m.def("interaction_matrix",
        [](const std::string& t, int dim) { return graph_matrices(topology_arg(t), dim).interaction; });
  m.def("eigenvalues", [](const Eigen::MatrixXd& a) { return symmetric_spectrum(a).values; });
  m.def("lambda_min_closed_form", &lambda_min_closed_form);

  m.def("param_count", [](const std::string& arch, int d_in, int d_out, std::vector<int> hidden) {
    return ParamLayout(arch_from_string(arch), {d_in, d_out, std::move(hidden)}).size();
  });
  m.def(
      "forward",
      [](const std::string& arch, int d_in, int d_out, std::vector<int> hidden, const std::string& t,
         const std::vector<Eigen::VectorXd>& thetas, const std::vector<Eigen::VectorXd>& inputs) {
        const Network net(arch_from_string(arch), {d_in, d_out, std::move(hidden)},
                          MessageGraph::from(topology_arg(t)));
        return net.forward(thetas, inputs).outputs;
      },
      py::arg("arch"), py::arg("d_in"), py::arg("d_out"), py::arg("hidden"), py::arg("topology"),
      py::arg("thetas"), py::arg("inputs"));
  m.def(
      "jacobian",
      [](const std::string& arch, int d_in, int d_out, std::vector<int> hidden, const std::string& t,
         const std::vector<Eigen::VectorXd>& thetas, const std::vector<Eigen::VectorXd>& inputs, int i, int z) {
        const Network net(arch_from_string(arch), {d_in, d_out, std::move(hidden)},
                          MessageGraph::from(topology_arg(t)));
        return net.jacobian(net.forward(thetas, inputs), thetas, i, z);
      },
      py::arg("arch"), py::arg("d_in"), py::arg("d_out"), py::arg("hidden"), py::arg("topology"),
      py::arg("thetas"), py::arg("inputs"), py::arg("i"), py::arg("z"));

  m.def(
      "gradcheck",
      [](int configs, std::uint64_t seed) {
        GradcheckOptions o;
        o.configs = configs;
        o.seed = seed;
        const auto r = gradcheck(o);
        return json{{"configs", r.configs},
                    {"blocks", r.blocks},
                    {"entries", r.entries},
                    {"max_rel_error", r.max_rel_error},
                    {"max_small_abs_error", r.max_small_abs_error},
                    {"max_route_gap", r.max_route_gap},
                    {"seconds", r.seconds},
                    {"pass", r.pass}}
            .dump();
      },
      py::arg("configs") = 50, py::arg("seed") = 7);

  m.def("project", &project, py::arg("a"), py::arg("theta"), py::arg("theta_bar"), py::arg("band"));
  m.def(
      "certify_gains",
      [](const std::string& control, int n, double lipschitz) {
        const auto cfg = control_from_json(json::parse(control));
        return to_json(certify_gains(cfg, n, lipschitz > 0 ? lipschitz : estimate_target_lipschitz())).dump();
      },
      py::arg("control") = "{}", py::arg("n_agents") = 6, py::arg("lipschitz") = 0.0);
  m.def("target_accel", &target_accel);

  m.def("rms", &rms);
  m.def(
      "run_scenario",
      [](const std::string& scenario, double split, bool take_sqrt) {
        const Scenario s = scenario_from_json(json::parse(scenario));
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_scenario(s);
        }
        SummaryOptions o;
        o.split = o.trend_window = split;
        o.take_sqrt = take_sqrt;
        py::dict out;
        out["report"] = run_to_json(r, o).dump();
        out["e"] = r.e;
        out["de"] = r.de;
        out["q_tilde"] = r.q_tilde;
        out["u"] = r.u;
        out["phi1_err"] = r.phi1_err;
        out["phi2_err"] = r.phi2_err;
        return out;
      },
      py::arg("scenario"), py::arg("split") = 10.0, py::arg("take_sqrt") = false);
}
