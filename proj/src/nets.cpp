#include "lbgnn/nets.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace lbgnn {

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::dnn: return "dnn";
    case Arch::gnn: return "gnn";
    case Arch::gat: return "gat";
  }
  return "gnn";
}

Arch arch_from_string(std::string_view name) {
  if (name == "dnn" || name == "DNN") return Arch::dnn;
  if (name == "gnn" || name == "GNN") return Arch::gnn;
  if (name == "gat" || name == "GAT") return Arch::gat;
  throw std::invalid_argument("unknown architecture: " + std::string(name));
}

void LayerSpec::validate() const {
  if (d_in < 1 || d_out < 1) throw std::invalid_argument("input and output widths must be positive");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
}

ParamLayout::ParamLayout(Arch arch, LayerSpec spec) : arch_(arch), spec_(std::move(spec)) {
  spec_.validate();
  const int k = spec_.depth();
  Eigen::Index offset = 0;
  int prev = spec_.d_in;
  for (int j = 0; j <= k; ++j) {
    const int width = j < k ? spec_.hidden[j] : spec_.d_out;
    w_offset_.push_back(offset);
    w_rows_.push_back(prev + 1);
    w_cols_.push_back(width);
    offset += static_cast<Eigen::Index>(prev + 1) * width;
    prev = width;
  }
  layer_count_ = offset;
  if (arch_ == Arch::gat) {
    for (int j = 0; j < k; ++j) {
      a_offset_.push_back(offset);
      offset += a_size(j);
    }
  }
  size_ = offset;
}

Eigen::Index gnn_param_count(const LayerSpec& spec) {
  Eigen::Index p = 0;
  int prev = spec.d_in;
  for (int j = 0; j <= spec.depth(); ++j) {
    const int width = j < spec.depth() ? spec.hidden[j] : spec.d_out;
    p += static_cast<Eigen::Index>(width) * (prev + 1);
    prev = width;
  }
  return p;
}

Eigen::Index gat_param_count(const LayerSpec& spec) {
  Eigen::Index p = gnn_param_count(spec);
  for (int w : spec.hidden) p += 2 * w;
  return p;
}

Eigen::VectorXd NodeWeights::flatten(const ParamLayout& layout) const {
  const int k = layout.depth();
  if (static_cast<int>(layers.size()) != k + 1)
    throw std::invalid_argument("layer count does not match the layout");
  if (layout.has_attention() != !attention.empty() ||
      (layout.has_attention() && static_cast<int>(attention.size()) != k))
    throw std::invalid_argument("attention vectors do not match the layout");
  Eigen::VectorXd theta(layout.size());
  for (int j = 0; j <= k; ++j) {
    if (layers[j].rows() != layout.w_rows(j) || layers[j].cols() != layout.w_cols(j))
      throw std::invalid_argument("layer " + std::to_string(j) + " has the wrong shape");
    theta.segment(layout.w_offset(j), layers[j].size()) =
        Eigen::Map<const Eigen::VectorXd>(layers[j].data(), layers[j].size());
  }
  for (int j = 0; j < static_cast<int>(attention.size()); ++j) {
    if (attention[j].size() != layout.a_size(j))
      throw std::invalid_argument("attention vector has the wrong length");
    theta.segment(layout.a_offset(j), layout.a_size(j)) = attention[j];
  }
  return theta;
}

NodeWeights NodeWeights::unflatten(const ParamLayout& layout, const Eigen::VectorXd& theta) {
  if (theta.size() != layout.size()) throw std::invalid_argument("theta has the wrong length");
  NodeWeights w;
  for (int j = 0; j <= layout.depth(); ++j) w.layers.emplace_back(layout.W(theta, j));
  if (layout.has_attention())
    for (int j = 0; j < layout.depth(); ++j) w.attention.emplace_back(layout.a(theta, j));
  return w;
}

Eigen::VectorXd EnsembleActivations::attention_row(int layer, int node, int n_nodes,
                                                   const MessageGraph& graph) const {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(n_nodes);
  const auto& nbrs = graph.closed[node];
  if (attention.empty()) {
    for (int n : nbrs) row(n) = 1.0 / static_cast<double>(nbrs.size());
    return row;
  }
  for (std::size_t s = 0; s < nbrs.size(); ++s) row(nbrs[s]) = attention[layer][node](s);
  return row;
}

const Eigen::MatrixXd* EnsembleJacobian::find(int i, int z) const {
  for (const auto& b : rows[i])
    if (b.node == z) return &b.value;
  return nullptr;
}

Network::Network(Arch arch, LayerSpec spec, MessageGraph graph)
    : layout_(arch, std::move(spec)),
      graph_(arch == Arch::dnn ? MessageGraph::isolated(graph.size()) : std::move(graph)) {}

void Network::check(std::span<const Eigen::VectorXd> thetas,
                    std::span<const Eigen::VectorXd> inputs) const {
  if (static_cast<int>(thetas.size()) != nodes() || static_cast<int>(inputs.size()) != nodes())
    throw std::invalid_argument("expected one weight vector and one input per node");
  for (const auto& t : thetas)
    if (t.size() != layout_.size()) throw std::invalid_argument("weight vector has the wrong length");
  for (const auto& x : inputs)
    if (x.size() != spec().d_in) throw std::invalid_argument("input has the wrong dimension");
}

EnsembleActivations Network::forward(std::span<const Eigen::VectorXd> thetas,
                                     std::span<const Eigen::VectorXd> inputs) const {
  check(thetas, inputs);
  const int n = nodes();
  const int k = layout_.depth();
  const bool gat = arch() == Arch::gat;

  EnsembleActivations acts;
  acts.features.resize(k + 1, std::vector<Eigen::VectorXd>(n));
  acts.preactivation.resize(k, std::vector<Eigen::VectorXd>(n));
  acts.aggregate.resize(k, std::vector<Eigen::VectorXd>(n));
  if (gat) {
    acts.projected.resize(k, std::vector<Eigen::MatrixXd>(n));
    acts.coefficients.resize(k, std::vector<Eigen::VectorXd>(n));
    acts.attention.resize(k, std::vector<Eigen::VectorXd>(n));
  }
  for (int m = 0; m < n; ++m) {
    auto& f = acts.features[0][m];
    f.resize(spec().d_in + 1);
    f << inputs[m], 1.0;
  }

  for (int l = 0; l < k; ++l) {
    const auto& prev = acts.features[l];
    const int width = spec().hidden[l];
    for (int m = 0; m < n; ++m) {
      const auto W = layout_.W(thetas[m], l);
      const auto& nbrs = graph_.closed[m];
      Eigen::VectorXd agg = Eigen::VectorXd::Zero(W.rows());
      if (gat) {
        const auto a = layout_.a(thetas[m], l);
        Eigen::MatrixXd h(width, nbrs.size());
        for (std::size_t s = 0; s < nbrs.size(); ++s) h.col(s) = W.transpose() * prev[nbrs[s]];
        const auto self = std::find(nbrs.begin(), nbrs.end(), m) - nbrs.begin();
        const double self_score = a.head(width).dot(h.col(self));
        Eigen::VectorXd c(nbrs.size());
        for (std::size_t s = 0; s < nbrs.size(); ++s) c(s) = self_score + a.tail(width).dot(h.col(s));
        Eigen::VectorXd beta = (c.array() - c.maxCoeff()).exp();
        beta /= beta.sum();
        for (std::size_t s = 0; s < nbrs.size(); ++s) agg += beta(s) * prev[nbrs[s]];
        acts.projected[l][m] = std::move(h);
        acts.coefficients[l][m] = std::move(c);
        acts.attention[l][m] = std::move(beta);
      } else {
        for (int nb : nbrs) agg += prev[nb];
      }
      Eigen::VectorXd x = W.transpose() * agg;
      auto& out = acts.features[l + 1][m];
      out.resize(width + 1);
      out.head(width) = x.array().tanh();
      out(width) = 1.0;
      acts.preactivation[l][m] = std::move(x);
      acts.aggregate[l][m] = std::move(agg);
    }
  }

  acts.outputs.resize(n);
  for (int m = 0; m < n; ++m)
    acts.outputs[m] = layout_.W(thetas[m], k).transpose() * acts.features[k][m];
  return acts;
}

namespace {

std::vector<Eigen::VectorXd> flatten_all(const ParamLayout& layout,
                                         std::span<const NodeWeights> weights) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(weights.size());
  for (const auto& w : weights) out.push_back(w.flatten(layout));
  return out;
}

}  // namespace

EnsembleActivations gnn_forward(const LayerSpec& spec, const GraphMatrices& graph,
                                std::span<const NodeWeights> weights,
                                std::span<const Eigen::VectorXd> inputs) {
  Network net(Arch::gnn, spec, MessageGraph::from(graph));
  return net.forward(flatten_all(net.layout(), weights), inputs);
}

EnsembleActivations gat_forward(const LayerSpec& spec, const GraphMatrices& graph,
                                std::span<const NodeWeights> weights,
                                std::span<const Eigen::VectorXd> inputs) {
  Network net(Arch::gat, spec, MessageGraph::from(graph));
  return net.forward(flatten_all(net.layout(), weights), inputs);
}

Eigen::VectorXd dnn_forward(const LayerSpec& spec, const NodeWeights& weights,
                            const Eigen::VectorXd& input) {
  Network net(Arch::dnn, spec, MessageGraph::isolated(1));
  const std::vector<Eigen::VectorXd> theta{weights.flatten(net.layout())};
  const std::vector<Eigen::VectorXd> in{input};
  return net.forward(theta, in).outputs[0];
}

Eigen::MatrixXd gnn_jacobian(const LayerSpec& spec, const GraphMatrices& graph,
                             std::span<const NodeWeights> weights,
                             std::span<const Eigen::VectorXd> inputs, int i, int z) {
  Network net(Arch::gnn, spec, MessageGraph::from(graph));
  const auto thetas = flatten_all(net.layout(), weights);
  return net.jacobian(net.forward(thetas, inputs), thetas, i, z);
}

Eigen::MatrixXd gat_jacobian(const LayerSpec& spec, const GraphMatrices& graph,
                             std::span<const NodeWeights> weights,
                             std::span<const Eigen::VectorXd> inputs, int i, int z) {
  Network net(Arch::gat, spec, MessageGraph::from(graph));
  const auto thetas = flatten_all(net.layout(), weights);
  return net.jacobian(net.forward(thetas, inputs), thetas, i, z);
}

Eigen::MatrixXd finite_diff_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& theta, double step) {
  return finite_diff_jacobian<double>(f, theta, step);
}

InitOptions default_init(Arch arch) {
  if (arch == Arch::gat) return {0.3, 0.3};
  return {0.03, 0.03};
}

std::vector<Eigen::VectorXd> init_weights(const ParamLayout& layout, int n_nodes,
                                          std::uint64_t seed, const InitOptions& options) {
  if (!(options.layer_stddev > 0) || !(options.attention_stddev > 0))
    throw std::invalid_argument("initialization stddev must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> layer(0.0, options.layer_stddev);
  std::normal_distribution<double> att(0.0, options.attention_stddev);
  Eigen::VectorXd theta(layout.size());
  for (Eigen::Index m = 0; m < layout.layer_weight_count(); ++m) theta(m) = layer(rng);
  for (Eigen::Index m = layout.layer_weight_count(); m < layout.size(); ++m) theta(m) = att(rng);
  return std::vector<Eigen::VectorXd>(n_nodes, theta);
}

}  // namespace lbgnn
