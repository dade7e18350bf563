#pragma once

#include "lbgnn/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace lbgnn {

enum class Arch { dnn, gnn, gat };

std::string_view to_string(Arch arch);
Arch arch_from_string(std::string_view name);

/// Layer widths for one network. hidden.size() is the number of
/// message-passing layers k; the output layer (index k) is linear.
struct LayerSpec {
  int d_in = 1;
  int d_out = 1;
  std::vector<int> hidden;

  int depth() const { return static_cast<int>(hidden.size()); }
  void validate() const;
};

/// tanh with its first two derivatives.
struct Tanh {
  static double value(double x) { return std::tanh(x); }
  static double d1(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  static double d2(double x) {
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
  }
};

/// Offsets of every weight block inside the flat per-node vector theta.
/// Layer matrices come first (vec, column-major), attention vectors after.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(Arch arch, LayerSpec spec);

  Arch arch() const { return arch_; }
  const LayerSpec& spec() const { return spec_; }
  int depth() const { return spec_.depth(); }

  Eigen::Index size() const { return size_; }
  Eigen::Index layer_weight_count() const { return layer_count_; }

  // W^(j) has rows(j) = width(j-1) + 1 and cols(j) = width(j).
  Eigen::Index w_offset(int j) const { return w_offset_[j]; }
  Eigen::Index w_rows(int j) const { return w_rows_[j]; }
  Eigen::Index w_cols(int j) const { return w_cols_[j]; }

  // a^(j) for j < depth(), GAT only; length 2 * hidden[j].
  Eigen::Index a_offset(int j) const { return a_offset_[j]; }
  Eigen::Index a_size(int j) const { return 2 * static_cast<Eigen::Index>(spec_.hidden[j]); }
  bool has_attention() const { return arch_ == Arch::gat; }

  Eigen::Map<const Eigen::MatrixXd> W(const Eigen::VectorXd& theta, int j) const {
    return {theta.data() + w_offset_[j], w_rows_[j], w_cols_[j]};
  }
  Eigen::Map<const Eigen::VectorXd> a(const Eigen::VectorXd& theta, int j) const {
    return {theta.data() + a_offset_[j], a_size(j)};
  }

 private:
  Arch arch_ = Arch::gnn;
  LayerSpec spec_;
  Eigen::Index size_ = 0;
  Eigen::Index layer_count_ = 0;
  std::vector<Eigen::Index> w_offset_, w_rows_, w_cols_, a_offset_;
};

/// Closed-form parameter counts.
Eigen::Index gnn_param_count(const LayerSpec& spec);
Eigen::Index gat_param_count(const LayerSpec& spec);

/// Per-node weights in matrix form.
struct NodeWeights {
  std::vector<Eigen::MatrixXd> layers;     // W^(0..k)
  std::vector<Eigen::VectorXd> attention;  // a^(0..k-1), empty unless GAT

  Eigen::VectorXd flatten(const ParamLayout& layout) const;
  static NodeWeights unflatten(const ParamLayout& layout, const Eigen::VectorXd& theta);
};

/// Everything the forward pass produced, kept for the Jacobian routines.
struct EnsembleActivations {
  // features[l][m]: bias-augmented input to layer l at node m.
  // features[0][m] is the augmented node input; features[k][m] feeds the output layer.
  std::vector<std::vector<Eigen::VectorXd>> features;
  std::vector<std::vector<Eigen::VectorXd>> preactivation;  // [l][m], l < k
  std::vector<std::vector<Eigen::VectorXd>> aggregate;      // [l][m], l < k
  // GAT only; index s follows graph.closed[m][s].
  std::vector<std::vector<Eigen::MatrixXd>> projected;      // [l][m]: columns W_m^T features_n
  std::vector<std::vector<Eigen::VectorXd>> coefficients;   // [l][m]
  std::vector<std::vector<Eigen::VectorXd>> attention;      // [l][m], softmax of coefficients
  std::vector<Eigen::VectorXd> outputs;                     // [m], length d_out

  /// Normalized attention of node m at layer l as a dense length-N row;
  /// zero off the closed neighborhood. Uniform ones for GNN/DNN are not stored.
  Eigen::VectorXd attention_row(int layer, int node, int n_nodes,
                                const MessageGraph& graph) const;
};

/// d(phi_i)/d(theta_z) for every node i and every z that influences it.
struct EnsembleJacobian {
  struct Block {
    int node;
    Eigen::MatrixXd value;  // d_out x p
  };
  std::vector<std::vector<Block>> rows;  // rows[i], sorted by node

  const Eigen::MatrixXd* find(int i, int z) const;
};

/// One network replicated over the agents, each node with its own weights.
class Network {
 public:
  Network(Arch arch, LayerSpec spec, MessageGraph graph);

  Arch arch() const { return layout_.arch(); }
  const LayerSpec& spec() const { return layout_.spec(); }
  const ParamLayout& layout() const { return layout_; }
  const MessageGraph& graph() const { return graph_; }
  int nodes() const { return graph_.size(); }

  EnsembleActivations forward(std::span<const Eigen::VectorXd> thetas,
                              std::span<const Eigen::VectorXd> inputs) const;

  /// d(phi_i)/d(theta_z) by propagating the sensitivity of every node's
  /// layer output to theta_z upward through the layers.
  Eigen::MatrixXd jacobian(const EnsembleActivations& acts,
                           std::span<const Eigen::VectorXd> thetas, int i, int z) const;

  /// All nonzero blocks d(phi_i)/d(theta_z) at once, accumulated from the
  /// output side. Same derivative as jacobian(), evaluated output-first.
  EnsembleJacobian ensemble_jacobian(const EnsembleActivations& acts,
                                     std::span<const Eigen::VectorXd> thetas) const;

 private:
  void check(std::span<const Eigen::VectorXd> thetas,
             std::span<const Eigen::VectorXd> inputs) const;

  ParamLayout layout_;
  MessageGraph graph_;
};

// Spec-level entry points over explicit per-node weights.
EnsembleActivations gnn_forward(const LayerSpec& spec, const GraphMatrices& graph,
                                std::span<const NodeWeights> weights,
                                std::span<const Eigen::VectorXd> inputs);
EnsembleActivations gat_forward(const LayerSpec& spec, const GraphMatrices& graph,
                                std::span<const NodeWeights> weights,
                                std::span<const Eigen::VectorXd> inputs);
Eigen::VectorXd dnn_forward(const LayerSpec& spec, const NodeWeights& weights,
                            const Eigen::VectorXd& input);
Eigen::MatrixXd gnn_jacobian(const LayerSpec& spec, const GraphMatrices& graph,
                             std::span<const NodeWeights> weights,
                             std::span<const Eigen::VectorXd> inputs, int i, int z);
Eigen::MatrixXd gat_jacobian(const LayerSpec& spec, const GraphMatrices& graph,
                             std::span<const NodeWeights> weights,
                             std::span<const Eigen::VectorXd> inputs, int i, int z);

/// Central differences, column m = (f(theta + h e_m) - f(theta - h e_m)) / 2h.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> finite_diff_jacobian(
    const std::function<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>&)>& f,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& theta, Scalar step) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (!(step > Scalar(0))) throw std::invalid_argument("finite-difference step must be positive");
  Vec probe = theta;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out;
  for (Eigen::Index m = 0; m < theta.size(); ++m) {
    probe(m) = theta(m) + step;
    const Vec plus = f(probe);
    probe(m) = theta(m) - step;
    const Vec minus = f(probe);
    probe(m) = theta(m);
    if (m == 0) out.resize(plus.size(), theta.size());
    out.col(m) = (plus - minus) / (Scalar(2) * step);
  }
  return out;
}

Eigen::MatrixXd finite_diff_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& theta, double step = 1e-6);

struct InitOptions {
  double layer_stddev = 0.03;
  double attention_stddev = 0.03;
};

/// Defaults: 0.03 for DNN/GNN layers, 0.3 for GAT layers and attention.
InitOptions default_init(Arch arch);

/// i.i.d. normal entries drawn once and copied to every node.
std::vector<Eigen::VectorXd> init_weights(const ParamLayout& layout, int n_nodes,
                                          std::uint64_t seed, const InitOptions& options);

}  // namespace lbgnn
