#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lbgnn {

enum class TopologyKind { path, ring, star, complete, acyclic, custom };

std::string_view to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(std::string_view name);

/// Static undirected communication graph over agents 0..n_agents-1, plus the
/// pinning flags b_i marking agents that can measure the target.
struct Topology {
  TopologyKind kind = TopologyKind::custom;
  int n_agents = 0;
  std::vector<std::pair<int, int>> edges;  // unordered, stored with first < second
  std::vector<bool> pins;

  std::vector<std::vector<int>> neighbors() const;  // N_i, sorted
  bool connected() const;
  int pin_count() const;
};

/// Validates and normalizes an explicit edge list (0-based node ids).
/// Throws std::invalid_argument on self-loops, duplicates, or out-of-range ids.
Topology make_topology(int n_agents, std::vector<std::pair<int, int>> edges,
                       std::vector<bool> pins,
                       TopologyKind kind = TopologyKind::custom);

/// Named topology with the default pin set. Star uses node 0 as the hub.
/// The acyclic family attaches node m (m >= 2, 0-based) to node 2*floor(m/2)-1,
/// which for N = 6 gives edges {1-2, 2-3, 2-4, 4-5, 4-6} in 1-based labels.
Topology build_topology(TopologyKind kind, int n_agents);

/// Default pins: every other agent starting at the first for path, ring,
/// complete and acyclic; the first ceil(N/2) agents (hub included) for star.
std::vector<bool> default_pins(TopologyKind kind, int n_agents);

struct GraphMatrices {
  int state_dim = 1;
  Eigen::MatrixXd adjacency;            // A
  Eigen::MatrixXd adjacency_self;       // A + I
  Eigen::MatrixXd degree;               // D
  Eigen::MatrixXd laplacian;            // D - A
  Eigen::MatrixXd pinning;              // diag(b)
  Eigen::MatrixXd interaction;          // (L + diag(b)) kron I_n
};

/// Throws std::invalid_argument when the topology is disconnected.
GraphMatrices graph_matrices(const Topology& topology, int state_dim);

/// L + diag(b), the N x N core of the interaction matrix.
Eigen::MatrixXd pinned_laplacian(const Topology& topology);

/// Smallest eigenvalue over all connected N-agent graphs with at least one
/// pin: 2(1 + cos(2N pi / (2N + 1))), attained by a path pinned at one end.
double lambda_min_closed_form(int n_agents);

/// Upper bound N + 1 on the largest eigenvalue of L + diag(b).
double lambda_max_bound(int n_agents);

struct SymmetricSpectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values(k)
  double max_residual = 0;  // max_k ||M v_k - lambda_k v_k|| / ||v_k||
};

SymmetricSpectrum symmetric_spectrum(const Eigen::MatrixXd& matrix);

/// Augmented k-hop neighborhood of node i (includes i), sorted ascending.
std::vector<int> k_hop_neighborhood(const Topology& topology, int node, int hops);

/// Closed neighborhoods N̄_i in the form the message-passing layers consume.
struct MessageGraph {
  std::vector<std::vector<int>> closed;  // sorted, each contains i

  int size() const { return static_cast<int>(closed.size()); }

  static MessageGraph from(const Topology& topology);
  static MessageGraph from(const GraphMatrices& matrices);
  /// Every node sees only itself; turns a message-passing net into N
  /// independent feedforward nets.
  static MessageGraph isolated(int n_nodes);
};

/// Relabels nodes: node v of the input becomes node perm[v] of the output.
Topology permute(const Topology& topology, const std::vector<int>& perm);

}  // namespace lbgnn
