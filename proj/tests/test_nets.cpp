#include "lbgnn/gradcheck.hpp"
#include "lbgnn/nets.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace lbgnn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Instance {
  LayerSpec spec;
  Topology topology;
  std::vector<NodeWeights> weights;
  std::vector<VectorXd> inputs;
};

Instance random_instance(const Topology& t, LayerSpec spec, bool attention, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  Instance in{spec, t, {}, {}};
  for (int i = 0; i < t.n_agents; ++i) {
    in.weights.push_back(oracle::random_weights(spec, attention, rng, scale));
    in.inputs.push_back(oracle::random_vector(spec.d_in, rng));
  }
  return in;
}

std::vector<VectorXd> flat(const Instance& in, Arch arch) {
  const ParamLayout layout(arch, in.spec);
  std::vector<VectorXd> out;
  for (const auto& w : in.weights) out.push_back(w.flatten(layout));
  return out;
}

std::vector<NodeWeights> without_attention(std::vector<NodeWeights> w) {
  for (auto& x : w) x.attention.clear();
  return w;
}

double max_diff(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

Topology path(int n) { return build_topology(TopologyKind::path, n); }

Topology single() { return make_topology(1, {}, {true}); }

// Double-precision central differences of the dense oracle, d(phi_i)/d(theta_z).
MatrixXd oracle_jacobian(const Instance& in, Arch arch, int i, int z, double h = 1e-5) {
  const ParamLayout layout(arch, in.spec);
  const auto abar = oracle::closed_adjacency(in.topology.n_agents, in.topology.edges);
  const auto mode = arch == Arch::gat ? oracle::Aggregate::attention : oracle::Aggregate::sum;
  auto thetas = flat(in, arch);
  MatrixXd jac(in.spec.d_out, layout.size());
  for (Eigen::Index m = 0; m < layout.size(); ++m) {
    auto w = in.weights;
    const double base = thetas[z](m);
    thetas[z](m) = base + h;
    w[z] = NodeWeights::unflatten(layout, thetas[z]);
    const VectorXd plus = oracle::forward(mode, in.spec, abar, w, in.inputs)[i];
    thetas[z](m) = base - h;
    w[z] = NodeWeights::unflatten(layout, thetas[z]);
    const VectorXd minus = oracle::forward(mode, in.spec, abar, w, in.inputs)[i];
    thetas[z](m) = base;
    jac.col(m) = (plus - minus) / (2 * h);
  }
  return jac;
}

}  // namespace

TEST_CASE("parameter counts and flatten round trip") {
  const LayerSpec spec{5, 3, {4, 6}};
  CHECK(gnn_param_count(spec) == 4 * 6 + 6 * 5 + 3 * 7);
  CHECK(gat_param_count(spec) == gnn_param_count(spec) + 2 * 4 + 2 * 6);
  std::mt19937_64 rng(3);
  for (Arch arch : {Arch::gnn, Arch::gat}) {
    const ParamLayout layout(arch, spec);
    CHECK(layout.size() == (arch == Arch::gat ? gat_param_count(spec) : gnn_param_count(spec)));
    const auto w = oracle::random_weights(spec, arch == Arch::gat, rng);
    const VectorXd theta = w.flatten(layout);
    const auto back = NodeWeights::unflatten(layout, theta);
    for (int j = 0; j <= spec.depth(); ++j) CHECK((back.layers[j] - w.layers[j]).norm() == 0.0);
    for (std::size_t j = 0; j < w.attention.size(); ++j) CHECK((back.attention[j] - w.attention[j]).norm() == 0.0);
    CHECK((back.flatten(layout) - theta).norm() == 0.0);
    // vec() is column-major, layer blocks first.
    CHECK(theta(1) == w.layers[0](1, 0));
    CHECK(theta(spec.d_in + 1) == w.layers[0](0, 1));
  }
}

TEST_CASE("zero weights give zero output and bias-only hidden features") {
  const LayerSpec spec{3, 2, {4, 4}};
  const auto t = path(3);
  const Network net(Arch::gnn, spec, MessageGraph::from(t));
  std::vector<VectorXd> thetas(3, VectorXd::Zero(net.layout().size()));
  std::mt19937_64 rng(1);
  std::vector<VectorXd> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back(oracle::random_vector(3, rng));
  const auto acts = net.forward(thetas, inputs);
  for (int i = 0; i < 3; ++i) {
    CHECK(acts.outputs[i].norm() == 0.0);
    VectorXd expected = VectorXd::Zero(5);
    expected(4) = 1.0;
    CHECK((acts.features[2][i] - expected).norm() == 0.0);
  }
  NodeWeights zero;
  zero.layers = {MatrixXd::Zero(4, 4), MatrixXd::Zero(5, 4), MatrixXd::Zero(5, 2)};
  CHECK(dnn_forward(spec, zero, inputs[0]).norm() == 0.0);
}

TEST_CASE("forward passes match the dense oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = random_instance(path(3), {2, 3, {4}}, true, seed);
    const auto g = graph_matrices(in.topology, 1);
    const auto abar = oracle::closed_adjacency(3, in.topology.edges);
    const auto gnn = gnn_forward(in.spec, g, without_attention(in.weights), in.inputs);
    CHECK(max_diff(gnn.outputs, oracle::forward(oracle::Aggregate::sum, in.spec, abar, in.weights, in.inputs)) <= 1e-13);
    const auto gat = gat_forward(in.spec, g, in.weights, in.inputs);
    CHECK(max_diff(gat.outputs, oracle::forward(oracle::Aggregate::attention, in.spec, abar, in.weights, in.inputs)) <=
          1e-13);
  }
  const auto deep = random_instance(build_topology(TopologyKind::ring, 5), {3, 2, {5, 4, 3}}, true, 9);
  const auto g = graph_matrices(deep.topology, 1);
  const auto abar = oracle::closed_adjacency(5, deep.topology.edges);
  CHECK(max_diff(gat_forward(deep.spec, g, deep.weights, deep.inputs).outputs,
                 oracle::forward(oracle::Aggregate::attention, deep.spec, abar, deep.weights, deep.inputs)) <= 1e-13);
}

TEST_CASE("dnn forward matches the oracle and a single self-looped node") {
  const LayerSpec spec{4, 3, {6, 5}};
  std::mt19937_64 rng(5);
  const auto w = oracle::random_weights(spec, false, rng);
  const VectorXd x = oracle::random_vector(4, rng);
  const VectorXd out = dnn_forward(spec, w, x);
  const auto ref = oracle::forward(oracle::Aggregate::sum, spec, MatrixXd::Identity(1, 1), {w}, {x});
  CHECK((out - ref[0]).cwiseAbs().maxCoeff() <= 1e-13);
  const std::vector<NodeWeights> ws{w};
  const std::vector<VectorXd> xs{x};
  CHECK((gnn_forward(spec, graph_matrices(single(), 1), ws, xs).outputs[0] - out).norm() <= 1e-14);
}

TEST_CASE("a one-node graph reduces both networks to a feedforward net") {
  const auto in = random_instance(single(), {3, 2, {4, 4}}, true, 2);
  const auto g = graph_matrices(in.topology, 1);
  const VectorXd dnn = dnn_forward(in.spec, without_attention(in.weights)[0], in.inputs[0]);
  CHECK((gnn_forward(in.spec, g, without_attention(in.weights), in.inputs).outputs[0] - dnn).norm() <= 1e-14);
  const auto gat = gat_forward(in.spec, g, in.weights, in.inputs);
  CHECK((gat.outputs[0] - dnn).norm() <= 1e-14);
  for (const auto& layer : gat.attention) CHECK(layer[0](0) == 1.0);
}

TEST_CASE("zero attention vectors give neighborhood means") {
  auto in = random_instance(build_topology(TopologyKind::star, 5), {3, 2, {4, 3}}, true, 4);
  for (auto& w : in.weights)
    for (auto& a : w.attention) a.setZero();
  const auto g = graph_matrices(in.topology, 1);
  const auto gat = gat_forward(in.spec, g, in.weights, in.inputs);
  const auto mg = MessageGraph::from(in.topology);
  for (const auto& layer : gat.attention)
    for (int i = 0; i < 5; ++i) {
      const double uniform = 1.0 / static_cast<double>(mg.closed[i].size());
      CHECK((layer[i].array() - uniform).abs().maxCoeff() <= 1e-15);
    }
  const auto abar = oracle::closed_adjacency(5, in.topology.edges);
  CHECK(max_diff(gat.outputs, oracle::forward(oracle::Aggregate::mean, in.spec, abar, in.weights, in.inputs)) <= 1e-13);
}

TEST_CASE("softmax rows sum to one on the closed neighborhood") {
  const auto in = random_instance(build_topology(TopologyKind::acyclic, 6), {3, 2, {5, 4}}, true, 8, 1.5);
  const auto g = graph_matrices(in.topology, 1);
  const auto mg = MessageGraph::from(in.topology);
  const auto acts = gat_forward(in.spec, g, in.weights, in.inputs);
  for (int l = 0; l < in.spec.depth(); ++l)
    for (int i = 0; i < 6; ++i) {
      const VectorXd row = acts.attention_row(l, i, 6, mg);
      CHECK(std::abs(row.sum() - 1.0) <= 1e-12);
      CHECK(row.minCoeff() >= 0.0);
      for (int m = 0; m < 6; ++m)
        if (g.adjacency_self(i, m) == 0.0) CHECK(row(m) == 0.0);
    }
}

TEST_CASE("permutation equivariance on five-node graphs") {
  std::mt19937_64 rng(21);
  const Topology graphs[] = {build_topology(TopologyKind::ring, 5), build_topology(TopologyKind::acyclic, 5),
                             make_topology(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {2, 4}}, std::vector<bool>(5, true))};
  for (Arch arch : {Arch::gnn, Arch::gat})
    for (const auto& t : graphs) {
      const auto in = random_instance(t, {3, 2, {4, 4}}, arch == Arch::gat, rng());
      const auto thetas = flat(in, arch);
      const Network net(arch, in.spec, MessageGraph::from(t));
      const auto out = net.forward(thetas, in.inputs).outputs;
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> perm(5);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<VectorXd> pt(5), px(5);
        for (int v = 0; v < 5; ++v) {
          pt[perm[v]] = thetas[v];
          px[perm[v]] = in.inputs[v];
        }
        const Network pnet(arch, in.spec, MessageGraph::from(permute(t, perm)));
        const auto pout = pnet.forward(pt, px).outputs;
        double err = 0.0;
        for (int v = 0; v < 5; ++v) err = std::max(err, (pout[perm[v]] - out[v]).cwiseAbs().maxCoeff());
        CHECK(err <= 1e-12);
      }
    }
}

TEST_CASE("output-layer block is the Kronecker product with the last features") {
  const auto in = random_instance(single(), {3, 4, {5}}, false, 6);
  const std::vector<VectorXd> thetas = flat(in, Arch::gnn);
  const Network net(Arch::gnn, in.spec, MessageGraph::from(in.topology));
  const auto acts = net.forward(thetas, in.inputs);
  const MatrixXd jac = net.jacobian(acts, thetas, 0, 0);
  const auto& layout = net.layout();
  const VectorXd f = acts.features[1][0];
  MatrixXd kron = MatrixXd::Zero(4, 4 * f.size());
  for (int r = 0; r < 4; ++r) kron.block(r, r * f.size(), 1, f.size()) = f.transpose();
  CHECK((jac.middleCols(layout.w_offset(1), 4 * f.size()) - kron).norm() <= 1e-15);
}

TEST_CASE("Jacobians vanish outside the (k-1)-hop neighborhood") {
  const auto t = path(6);
  for (Arch arch : {Arch::gnn, Arch::gat}) {
    const auto in = random_instance(t, {2, 2, {3, 3}}, arch == Arch::gat, 13);
    const auto thetas = flat(in, arch);
    const Network net(arch, in.spec, MessageGraph::from(t));
    const auto acts = net.forward(thetas, in.inputs);
    const auto ens = net.ensemble_jacobian(acts, thetas);
    for (int i = 0; i < 6; ++i) {
      const auto hood = k_hop_neighborhood(t, i, 1);
      for (int z = 0; z < 6; ++z) {
        const bool inside = std::find(hood.begin(), hood.end(), z) != hood.end();
        const double size = net.jacobian(acts, thetas, i, z).norm();
        if (inside) CHECK(size > 0.0);
        else {
          CHECK(size == 0.0);
          CHECK(ens.find(i, z) == nullptr);
        }
      }
    }
  }
}

TEST_CASE("outputs ignore inputs beyond k hops") {
  const auto t = path(6);
  for (Arch arch : {Arch::gnn, Arch::gat}) {
    auto in = random_instance(t, {2, 2, {3, 3}}, arch == Arch::gat, 17);
    const auto thetas = flat(in, arch);
    const Network net(arch, in.spec, MessageGraph::from(t));
    const auto before = net.forward(thetas, in.inputs).outputs;
    in.inputs[3] += VectorXd::Constant(2, 0.7);
    const auto after = net.forward(thetas, in.inputs).outputs;
    CHECK((after[0] - before[0]).norm() == 0.0);
    CHECK((after[1] - before[1]).norm() > 0.0);
  }
}

TEST_CASE("analytic Jacobians match finite differences of the dense oracle") {
  for (Arch arch : {Arch::gnn, Arch::gat})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto in = random_instance(path(3), {2, 2, {3, 4}}, arch == Arch::gat, 100 + seed);
      const auto thetas = flat(in, arch);
      const auto g = graph_matrices(in.topology, 1);
      const Network net(arch, in.spec, MessageGraph::from(in.topology));
      const auto acts = net.forward(thetas, in.inputs);
      const auto ens = net.ensemble_jacobian(acts, thetas);
      for (int i = 0; i < 3; ++i)
        for (int z = 0; z < 3; ++z) {
          const MatrixXd ref = oracle_jacobian(in, arch, i, z);
          const MatrixXd wrapped = arch == Arch::gat ? gat_jacobian(in.spec, g, in.weights, in.inputs, i, z)
                                                     : gnn_jacobian(in.spec, g, without_attention(in.weights), in.inputs, i, z);
          const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
          CHECK((wrapped - ref).cwiseAbs().maxCoeff() <= 1e-8 * scale);
          const auto* block = ens.find(i, z);
          const MatrixXd adj = block ? *block : MatrixXd::Zero(ref.rows(), ref.cols());
          CHECK((adj - wrapped).cwiseAbs().maxCoeff() <= 1e-14 * scale);
        }
    }
}

TEST_CASE("attention derivative is zero when every score is equal") {
  // Identical inputs and weights make every node's projected features equal, so
  // all scores in a neighborhood coincide for any attention vector.
  const LayerSpec spec{2, 2, {3, 3}};
  const auto t = build_topology(TopologyKind::ring, 4);
  std::mt19937_64 rng(31);
  const auto w = oracle::random_weights(spec, true, rng);
  const VectorXd x = oracle::random_vector(2, rng);
  const ParamLayout layout(Arch::gat, spec);
  const std::vector<VectorXd> thetas(4, w.flatten(layout));
  const std::vector<VectorXd> inputs(4, x);
  const Network net(Arch::gat, spec, MessageGraph::from(t));
  const auto acts = net.forward(thetas, inputs);
  for (int i = 0; i < 4; ++i)
    for (int z = 0; z < 4; ++z) {
      const MatrixXd jac = net.jacobian(acts, thetas, i, z);
      const Eigen::Index start = layout.a_offset(0);
      CHECK(jac.rightCols(layout.size() - start).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("GAT layer blocks equal GNN blocks on a single node") {
  const auto in = random_instance(single(), {3, 2, {4, 3}}, true, 41);
  const auto g = graph_matrices(in.topology, 1);
  const MatrixXd gat = gat_jacobian(in.spec, g, in.weights, in.inputs, 0, 0);
  const MatrixXd gnn = gnn_jacobian(in.spec, g, without_attention(in.weights), in.inputs, 0, 0);
  CHECK((gat.leftCols(gnn.cols()) - gnn).norm() <= 1e-14);
  CHECK(gat.rightCols(gat.cols() - gnn.cols()).norm() == 0.0);
}

TEST_CASE("finite differences") {
  const MatrixXd A = MatrixXd::Random(3, 4);
  const VectorXd b = VectorXd::Random(3);
  const auto lin = [&](const VectorXd& x) -> VectorXd { return A * x + b; };
  CHECK((finite_diff_jacobian(lin, VectorXd::Random(4), 1e-3) - A).cwiseAbs().maxCoeff() <= 1e-12);
  const auto s = [](const VectorXd& x) -> VectorXd { return x.array().sin(); };
  const VectorXd x0 = VectorXd::Constant(1, 0.3);
  CHECK(std::abs(finite_diff_jacobian(s, x0, 1e-6)(0, 0) - std::cos(0.3)) <= 1e-9);
  CHECK_THROWS_AS(finite_diff_jacobian(s, x0, 0.0), std::invalid_argument);
}

TEST_CASE("weight initialization") {
  CHECK(default_init(Arch::dnn).layer_stddev == 0.03);
  CHECK(default_init(Arch::gnn).layer_stddev == 0.03);
  CHECK(default_init(Arch::gat).layer_stddev == 0.3);
  CHECK(default_init(Arch::gat).attention_stddev == 0.3);
  const ParamLayout layout(Arch::gat, {6, 3, {24, 24}});
  const auto a = init_weights(layout, 4, 123, default_init(Arch::gat));
  const auto b = init_weights(layout, 4, 123, default_init(Arch::gat));
  const auto c = init_weights(layout, 4, 124, default_init(Arch::gat));
  for (int i = 0; i < 4; ++i) {
    CHECK((a[i] - b[i]).norm() == 0.0);
    CHECK((a[i] - a[0]).norm() == 0.0);
  }
  CHECK((a[0] - c[0]).norm() > 0.0);

  const ParamLayout big(Arch::gnn, {200, 10, {200, 200, 200}});
  REQUIRE(big.size() > 100000);
  const auto w = init_weights(big, 1, 5, {0.03, 0.03});
  const double var = w[0].squaredNorm() / static_cast<double>(w[0].size());
  CHECK(std::abs(var / (0.03 * 0.03) - 1.0) <= 0.05);
}

TEST_CASE("gradcheck suite passes on a reduced run") {
  GradcheckOptions o;
  o.configs = 6;
  const auto r = gradcheck(o);
  CHECK(r.pass);
  CHECK(r.configs == 6);
  CHECK(r.max_route_gap <= 1e-12);
}
