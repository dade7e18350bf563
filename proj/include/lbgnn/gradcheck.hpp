#pragma once

#include "lbgnn/nets.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lbgnn {

/// Straight per-equation forward pass in any scalar type, used as the
/// finite-difference target. Returns the output of every node. Scalar math
/// is found by argument-dependent lookup so multiprecision types work.
template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> reference_forward(
    Arch arch, const LayerSpec& spec, const MessageGraph& graph,
    const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& thetas,
    const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& inputs) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const ParamLayout layout(arch, spec);
  const MessageGraph g = arch == Arch::dnn ? MessageGraph::isolated(graph.size()) : graph;
  const int n = g.size();
  const int k = spec.depth();
  auto weight = [&](int node, int j) -> Mat {
    return Eigen::Map<const Mat>(thetas[node].data() + layout.w_offset(j), layout.w_rows(j), layout.w_cols(j));
  };
  std::vector<Vec> f(n);
  for (int m = 0; m < n; ++m) {
    f[m].resize(spec.d_in + 1);
    f[m] << inputs[m], Scalar(1);
  }
  for (int l = 0; l < k; ++l) {
    const int d = spec.hidden[l];
    std::vector<Vec> next(n);
    for (int m = 0; m < n; ++m) {
      const Mat W = weight(m, l);
      Vec agg = Vec::Zero(W.rows());
      if (arch == Arch::gat) {
        const Vec a = thetas[m].segment(layout.a_offset(l), 2 * d);
        const Vec hm = W.transpose() * f[m];
        std::vector<Scalar> c;
        for (int v : g.closed[m]) {
          Vec cat(2 * d);
          cat << hm, W.transpose() * f[v];
          c.push_back(a.dot(cat));
        }
        const Scalar top = *std::max_element(c.begin(), c.end());
        Scalar denom(0);
        for (auto& x : c) {
          using std::exp;
          x = exp(x - top);
          denom += x;
        }
        for (std::size_t s = 0; s < c.size(); ++s) agg += (c[s] / denom) * f[g.closed[m][s]];
      } else {
        for (int v : g.closed[m]) agg += f[v];
      }
      const Vec x = W.transpose() * agg;
      next[m].resize(d + 1);
      for (int r = 0; r < d; ++r) {
        using std::tanh;
        next[m](r) = tanh(x(r));
      }
      next[m](d) = Scalar(1);
    }
    f = std::move(next);
  }
  std::vector<Vec> out(n);
  for (int m = 0; m < n; ++m) out[m] = weight(m, k).transpose() * f[m];
  return out;
}

struct GradcheckOptions {
  int configs = 50;
  std::uint64_t seed = 7;
  int max_nodes = 4;
  int max_depth = 2;
  int max_width = 6;
  double step = 1e-6;
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;  // entries below this magnitude are compared absolutely
};

struct GradcheckReport {
  int configs = 0;
  long blocks = 0;
  long entries = 0;
  double max_rel_error = 0;        // over entries with |fd| >= abs_tol
  double max_small_abs_error = 0;  // over entries with |fd| < abs_tol
  double max_route_gap = 0;        // forward-sensitivity vs output-first route
  std::string worst;
  double seconds = 0;
  bool pass = false;
};

/// Random connected graphs with N <= max_nodes, k <= max_depth, widths <= max_width;
/// every (i, z) block of both routes against central differences evaluated in
/// quad precision, for GNN and GAT. At step 1e-6 a double or long double
/// difference quotient carries roundoff of order eps/step, which alone exceeds
/// the relative tolerance on entries near 1e-8.
GradcheckReport gradcheck(const GradcheckOptions& options = {});

}  // namespace lbgnn
