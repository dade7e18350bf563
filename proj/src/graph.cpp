#include "lbgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <stdexcept>

namespace lbgnn {
namespace {

Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& m, int n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows() * n, m.cols() * n);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out.block(r * n, c * n, n, n).diagonal().setConstant(m(r, c));
  return out;
}

}  // namespace

std::string_view to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::path: return "path";
    case TopologyKind::ring: return "ring";
    case TopologyKind::star: return "star";
    case TopologyKind::complete: return "complete";
    case TopologyKind::acyclic: return "acyclic";
    case TopologyKind::custom: return "custom";
  }
  return "custom";
}

TopologyKind topology_kind_from_string(std::string_view name) {
  if (name == "path") return TopologyKind::path;
  if (name == "ring") return TopologyKind::ring;
  if (name == "star") return TopologyKind::star;
  if (name == "complete") return TopologyKind::complete;
  if (name == "acyclic") return TopologyKind::acyclic;
  if (name == "custom") return TopologyKind::custom;
  throw std::invalid_argument("unknown topology kind: " + std::string(name));
}

std::vector<std::vector<int>> Topology::neighbors() const {
  std::vector<std::vector<int>> out(n_agents);
  for (auto [a, b] : edges) {
    out[a].push_back(b);
    out[b].push_back(a);
  }
  for (auto& list : out) std::sort(list.begin(), list.end());
  return out;
}

bool Topology::connected() const {
  if (n_agents <= 1) return n_agents == 1;
  auto adj = neighbors();
  std::vector<bool> seen(n_agents, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int count = 1;
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        frontier.push(w);
      }
    }
  }
  return count == n_agents;
}

int Topology::pin_count() const {
  return static_cast<int>(std::count(pins.begin(), pins.end(), true));
}

Topology make_topology(int n_agents, std::vector<std::pair<int, int>> edges,
                       std::vector<bool> pins, TopologyKind kind) {
  if (n_agents < 1) throw std::invalid_argument("topology needs at least one agent");
  if (static_cast<int>(pins.size()) != n_agents)
    throw std::invalid_argument("pin vector length must equal the number of agents");
  std::set<std::pair<int, int>> unique;
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_agents || b >= n_agents)
      throw std::invalid_argument("edge endpoint out of range");
    if (a == b) throw std::invalid_argument("self-loops are not allowed");
    if (a > b) std::swap(a, b);
    if (!unique.insert({a, b}).second) throw std::invalid_argument("duplicate edge");
  }
  Topology t;
  t.kind = kind;
  t.n_agents = n_agents;
  t.edges.assign(unique.begin(), unique.end());
  t.pins = std::move(pins);
  return t;
}

std::vector<bool> default_pins(TopologyKind kind, int n_agents) {
  std::vector<bool> pins(n_agents, false);
  if (kind == TopologyKind::star) {
    for (int i = 0; i < (n_agents + 1) / 2; ++i) pins[i] = true;
  } else {
    for (int i = 0; i < n_agents; i += 2) pins[i] = true;
  }
  return pins;
}

Topology build_topology(TopologyKind kind, int n_agents) {
  if (n_agents < 2) throw std::invalid_argument("named topologies need N >= 2");
  std::vector<std::pair<int, int>> edges;
  switch (kind) {
    case TopologyKind::path:
      for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
      break;
    case TopologyKind::ring:
      if (n_agents < 3) throw std::invalid_argument("ring topology needs N >= 3");
      for (int i = 0; i < n_agents; ++i) edges.emplace_back(i, (i + 1) % n_agents);
      break;
    case TopologyKind::star:
      for (int i = 1; i < n_agents; ++i) edges.emplace_back(0, i);
      break;
    case TopologyKind::complete:
      for (int i = 0; i < n_agents; ++i)
        for (int j = i + 1; j < n_agents; ++j) edges.emplace_back(i, j);
      break;
    case TopologyKind::acyclic:
      edges.emplace_back(0, 1);
      for (int m = 2; m < n_agents; ++m) edges.emplace_back(2 * (m / 2) - 1, m);
      break;
    case TopologyKind::custom:
      throw std::invalid_argument("custom topologies need an explicit edge list");
  }
  return make_topology(n_agents, std::move(edges), default_pins(kind, n_agents), kind);
}

Eigen::MatrixXd pinned_laplacian(const Topology& topology) {
  const int n = topology.n_agents;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (auto [a, b] : topology.edges) {
    m(a, b) -= 1.0;
    m(b, a) -= 1.0;
    m(a, a) += 1.0;
    m(b, b) += 1.0;
  }
  for (int i = 0; i < n; ++i)
    if (topology.pins[i]) m(i, i) += 1.0;
  return m;
}

GraphMatrices graph_matrices(const Topology& topology, int state_dim) {
  if (state_dim < 1) throw std::invalid_argument("state dimension must be positive");
  if (!topology.connected()) throw std::invalid_argument("topology is disconnected");
  const int n = topology.n_agents;
  GraphMatrices g;
  g.state_dim = state_dim;
  g.adjacency = Eigen::MatrixXd::Zero(n, n);
  for (auto [a, b] : topology.edges) {
    g.adjacency(a, b) = 1.0;
    g.adjacency(b, a) = 1.0;
  }
  g.adjacency_self = g.adjacency + Eigen::MatrixXd::Identity(n, n);
  g.degree = g.adjacency.rowwise().sum().asDiagonal();
  g.laplacian = g.degree - g.adjacency;
  g.pinning = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) g.pinning(i, i) = topology.pins[i] ? 1.0 : 0.0;
  const Eigen::MatrixXd core = g.laplacian + g.pinning;
  g.interaction = kron_identity(core, state_dim);
  return g;
}

double lambda_min_closed_form(int n_agents) {
  if (n_agents < 1) throw std::invalid_argument("N must be positive");
  const double n = n_agents;
  return 2.0 * (1.0 + std::cos(2.0 * n * std::numbers::pi / (2.0 * n + 1.0)));
}

double lambda_max_bound(int n_agents) {
  if (n_agents < 1) throw std::invalid_argument("N must be positive");
  return n_agents + 1.0;
}

SymmetricSpectrum symmetric_spectrum(const Eigen::MatrixXd& matrix) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  SymmetricSpectrum s;
  s.values = solver.eigenvalues();
  s.vectors = solver.eigenvectors();
  for (Eigen::Index k = 0; k < s.values.size(); ++k) {
    const Eigen::VectorXd v = s.vectors.col(k);
    const double r = (matrix * v - s.values(k) * v).norm() / v.norm();
    s.max_residual = std::max(s.max_residual, r);
  }
  return s;
}

std::vector<int> k_hop_neighborhood(const Topology& topology, int node, int hops) {
  if (node < 0 || node >= topology.n_agents) throw std::out_of_range("node out of range");
  if (hops < 0) throw std::invalid_argument("hop count must be nonnegative");
  auto adj = topology.neighbors();
  std::vector<int> dist(topology.n_agents, -1);
  std::queue<int> frontier;
  dist[node] = 0;
  frontier.push(node);
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop();
    if (dist[v] == hops) continue;
    for (int w : adj[v]) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        frontier.push(w);
      }
    }
  }
  std::vector<int> out;
  for (int v = 0; v < topology.n_agents; ++v)
    if (dist[v] >= 0) out.push_back(v);
  return out;
}

MessageGraph MessageGraph::from(const Topology& topology) {
  MessageGraph g;
  auto adj = topology.neighbors();
  g.closed.resize(topology.n_agents);
  for (int i = 0; i < topology.n_agents; ++i) {
    auto& list = g.closed[i];
    list = adj[i];
    list.insert(std::lower_bound(list.begin(), list.end(), i), i);
  }
  return g;
}

MessageGraph MessageGraph::from(const GraphMatrices& matrices) {
  MessageGraph g;
  const auto n = matrices.adjacency_self.rows();
  g.closed.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (matrices.adjacency_self(i, j) != 0.0) g.closed[i].push_back(static_cast<int>(j));
  return g;
}

MessageGraph MessageGraph::isolated(int n_nodes) {
  MessageGraph g;
  g.closed.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) g.closed[i] = {i};
  return g;
}

Topology permute(const Topology& topology, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != topology.n_agents)
    throw std::invalid_argument("permutation size mismatch");
  std::vector<std::pair<int, int>> edges;
  for (auto [a, b] : topology.edges) edges.emplace_back(perm[a], perm[b]);
  std::vector<bool> pins(topology.n_agents);
  for (int v = 0; v < topology.n_agents; ++v) pins[perm[v]] = topology.pins[v];
  return make_topology(topology.n_agents, std::move(edges), std::move(pins), TopologyKind::custom);
}

}  // namespace lbgnn
