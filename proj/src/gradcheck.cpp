#include "lbgnn/gradcheck.hpp"

#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

#include <chrono>
#include <random>
#include <sstream>

namespace lbgnn {
namespace {

using Quad = boost::multiprecision::float128;
using LVec = Eigen::Matrix<Quad, Eigen::Dynamic, 1>;

Topology random_connected(int n, std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int v = 1; v < n; ++v) edges.emplace_back(std::uniform_int_distribution<int>(0, v - 1)(rng), v);
  std::bernoulli_distribution extra(0.3);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (extra(rng) && std::find(edges.begin(), edges.end(), std::pair{a, b}) == edges.end())
        edges.emplace_back(a, b);
  return make_topology(n, std::move(edges), std::vector<bool>(n, true));
}

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradcheckReport rep;

  for (int c = 0; c < o.configs; ++c) {
    const int n = std::uniform_int_distribution<int>(1, o.max_nodes)(rng);
    LayerSpec spec;
    spec.d_in = std::uniform_int_distribution<int>(1, o.max_width)(rng);
    spec.d_out = std::uniform_int_distribution<int>(1, o.max_width)(rng);
    const int depth = std::uniform_int_distribution<int>(1, o.max_depth)(rng);
    for (int l = 0; l < depth; ++l) spec.hidden.push_back(std::uniform_int_distribution<int>(1, o.max_width)(rng));
    const Topology topo = random_connected(n, rng);
    const MessageGraph graph = MessageGraph::from(topo);

    std::vector<Eigen::VectorXd> inputs(n);
    for (auto& x : inputs) x = Eigen::VectorXd::NullaryExpr(spec.d_in, [&] { return normal(rng); });
    std::vector<LVec> linputs;
    for (const auto& x : inputs) linputs.push_back(x.cast<Quad>());

    for (Arch arch : {Arch::gnn, Arch::gat}) {
      const Network net(arch, spec, graph);
      const Eigen::Index p = net.layout().size();
      std::vector<Eigen::VectorXd> thetas(n);
      for (auto& t : thetas) t = Eigen::VectorXd::NullaryExpr(p, [&] { return 0.5 * normal(rng); });
      const auto acts = net.forward(thetas, inputs);
      const auto ens = net.ensemble_jacobian(acts, thetas);

      std::vector<LVec> lthetas;
      for (const auto& t : thetas) lthetas.push_back(t.cast<Quad>());
      for (int z = 0; z < n; ++z) {
        // d(all outputs)/d(theta_z), rows grouped by output node.
        std::function<LVec(const LVec&)> f = [&](const LVec& tz) {
          auto th = lthetas;
          th[z] = tz;
          const auto out = reference_forward<Quad>(arch, spec, graph, th, linputs);
          LVec flat(n * spec.d_out);
          for (int i = 0; i < n; ++i) flat.segment(i * spec.d_out, spec.d_out) = out[i];
          return flat;
        };
        const auto fd = finite_diff_jacobian<Quad>(f, lthetas[z], Quad(o.step));
        for (int i = 0; i < n; ++i) {
          const Eigen::MatrixXd fwd = net.jacobian(acts, thetas, i, z);
          const auto* adj = ens.find(i, z);
          const Eigen::MatrixXd adjoint = adj ? *adj : Eigen::MatrixXd::Zero(spec.d_out, p);
          rep.max_route_gap = std::max(rep.max_route_gap, (fwd - adjoint).cwiseAbs().maxCoeff());
          ++rep.blocks;
          for (Eigen::Index r = 0; r < spec.d_out; ++r)
            for (Eigen::Index m = 0; m < p; ++m) {
              const double ref = static_cast<double>(fd(i * spec.d_out + r, m));
              const double err = static_cast<double>(abs(Quad(fwd(r, m)) - fd(i * spec.d_out + r, m)));
              ++rep.entries;
              if (std::abs(ref) >= o.abs_tol) {
                const double rel = err / std::abs(ref);
                if (rel > rep.max_rel_error) {
                  rep.max_rel_error = rel;
                  std::ostringstream os;
                  os << to_string(arch) << " config " << c << " N=" << n << " i=" << i << " z=" << z
                     << " entry (" << r << "," << m << ")";
                  rep.worst = os.str();
                }
              } else {
                rep.max_small_abs_error = std::max(rep.max_small_abs_error, err);
              }
            }
        }
      }
    }
    ++rep.configs;
  }
  rep.pass = rep.max_rel_error <= o.rel_tol && rep.max_small_abs_error <= o.abs_tol &&
             rep.max_route_gap <= o.abs_tol;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace lbgnn
