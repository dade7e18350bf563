// Weight Jacobians of the message-passing networks.
//
// Both routes differentiate the same layer recursion
//   x_m = W_m^T sum_n beta_{m,n} f_n,   f'_m = [tanh(x_m); 1],   phi_i = W_i^(k)T f_i,
// with beta = 1 for GNN/DNN and beta = masked softmax of
//   c_{m,n} = a_m^T ((W_m^T f_m) (+) (W_m^T f_n))
// for GAT. Parameter order inside theta is vec(W^(0)), ..., vec(W^(k)), a^(0), ..., a^(k-1),
// with vec stacking columns, so d(W^T v)/d vec(W) = I (x) v^T.

#include "lbgnn/nets.hpp"

#include <algorithm>
#include <stdexcept>

namespace lbgnn {
namespace {

// m += I_d (x) v^T placed at column offset `offset`.
void add_identity_kron(Eigen::MatrixXd& m, Eigen::Index offset, const Eigen::VectorXd& v) {
  const Eigen::Index rows = v.size();
  for (Eigen::Index c = 0; c < m.rows(); ++c) m.block(c, offset + c * rows, 1, rows) += v.transpose();
}

Eigen::VectorXd tanh_slope(const Eigen::VectorXd& x) {
  return (1.0 - x.array().tanh().square()).matrix();
}

}  // namespace

Eigen::MatrixXd Network::jacobian(const EnsembleActivations& acts,
                                  std::span<const Eigen::VectorXd> thetas, int i, int z) const {
  const int n = nodes();
  if (i < 0 || i >= n || z < 0 || z >= n) throw std::out_of_range("node index out of range");
  if (static_cast<int>(thetas.size()) != n) throw std::invalid_argument("expected one weight vector per node");
  const int k = layout_.depth();
  const Eigen::Index p = layout_.size();
  const bool gat = arch() == Arch::gat;

  // sens[m] = d(features_m at the current layer)/d(theta_z); live[m] marks nonzero.
  std::vector<Eigen::MatrixXd> sens(n);
  std::vector<bool> live(n, false);

  for (int l = 0; l < k; ++l) {
    const auto& feats = acts.features[l];
    const int width = spec().hidden[l];
    std::vector<Eigen::MatrixXd> next(n);
    std::vector<bool> next_live(n, false);
    for (int m = 0; m < n; ++m) {
      const auto& nbrs = graph_.closed[m];
      const bool own = m == z;
      const bool reached = own || std::any_of(nbrs.begin(), nbrs.end(), [&](int v) { return live[v]; });
      if (!reached) continue;

      const auto W = layout_.W(thetas[m], l);
      Eigen::MatrixXd dagg = Eigen::MatrixXd::Zero(W.rows(), p);
      if (gat) {
        const auto a = layout_.a(thetas[m], l);
        const auto& beta = acts.attention[l][m];
        const auto& h = acts.projected[l][m];
        const auto self = std::find(nbrs.begin(), nbrs.end(), m) - nbrs.begin();
        const std::size_t deg = nbrs.size();

        std::vector<Eigen::MatrixXd> dh(deg);
        for (std::size_t s = 0; s < deg; ++s) {
          dh[s] = live[nbrs[s]] ? Eigen::MatrixXd(W.transpose() * sens[nbrs[s]])
                                : Eigen::MatrixXd::Zero(width, p);
          if (own) add_identity_kron(dh[s], layout_.w_offset(l), feats[nbrs[s]]);
        }
        Eigen::MatrixXd dc(deg, p);
        const Eigen::RowVectorXd self_part = a.head(width).transpose() * dh[self];
        for (std::size_t s = 0; s < deg; ++s) {
          dc.row(s) = self_part + a.tail(width).transpose() * dh[s];
          if (own) {
            dc.row(s).segment(layout_.a_offset(l), width) += h.col(self).transpose();
            dc.row(s).segment(layout_.a_offset(l) + width, width) += h.col(s).transpose();
          }
        }
        // softmax quotient rule: d beta_s = beta_s (d c_s - sum_t beta_t d c_t)
        const Eigen::RowVectorXd mean = beta.transpose() * dc;
        for (std::size_t s = 0; s < deg; ++s) {
          const Eigen::RowVectorXd dbeta = beta(s) * (dc.row(s) - mean);
          dagg.noalias() += feats[nbrs[s]] * dbeta;
          if (live[nbrs[s]]) dagg += beta(s) * sens[nbrs[s]];
        }
      } else {
        for (int v : nbrs)
          if (live[v]) dagg += sens[v];
      }

      Eigen::MatrixXd dx = W.transpose() * dagg;
      if (own) add_identity_kron(dx, layout_.w_offset(l), acts.aggregate[l][m]);
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(width + 1, p);
      out.topRows(width) = tanh_slope(acts.preactivation[l][m]).asDiagonal() * dx;
      next[m] = std::move(out);
      next_live[m] = true;
    }
    sens = std::move(next);
    live = std::move(next_live);
  }

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(spec().d_out, p);
  if (live[i]) jac = layout_.W(thetas[i], k).transpose() * sens[i];
  if (i == z) add_identity_kron(jac, layout_.w_offset(k), acts.features[k][i]);
  return jac;
}

EnsembleJacobian Network::ensemble_jacobian(const EnsembleActivations& acts,
                                            std::span<const Eigen::VectorXd> thetas) const {
  const int n = nodes();
  if (static_cast<int>(thetas.size()) != n) throw std::invalid_argument("expected one weight vector per node");
  const int k = layout_.depth();
  const Eigen::Index p = layout_.size();
  const int r_out = spec().d_out;
  const bool gat = arch() == Arch::gat;

  EnsembleJacobian result;
  result.rows.resize(n);

  for (int i = 0; i < n; ++i) {
    // jt[m] holds d(phi_i)/d(theta_m) transposed (p x d_out) so each output
    // component owns a contiguous column.
    std::vector<Eigen::MatrixXd> jt(n);
    auto touch = [&](int m) -> Eigen::MatrixXd& {
      if (jt[m].size() == 0) jt[m] = Eigen::MatrixXd::Zero(p, r_out);
      return jt[m];
    };
    auto add_outer = [&](Eigen::MatrixXd& target, Eigen::Index offset, const Eigen::VectorXd& v,
                         const Eigen::MatrixXd& g) {
      // d/dvec(W) of (W^T v) contracted with adjoint rows g (d_out x width)
      for (int r = 0; r < r_out; ++r)
        Eigen::Map<Eigen::MatrixXd>(target.col(r).data() + offset, v.size(), g.cols()).noalias() +=
            v * g.row(r);
    };

    const auto& top = acts.features[k][i];
    {
      auto& t = touch(i);
      for (int r = 0; r < r_out; ++r) t.col(r).segment(layout_.w_offset(k) + r * top.size(), top.size()) += top;
    }
    std::vector<Eigen::MatrixXd> adj(n);
    adj[i] = layout_.W(thetas[i], k).transpose();

    for (int l = k - 1; l >= 0; --l) {
      const auto& feats = acts.features[l];
      const int width = spec().hidden[l];
      std::vector<Eigen::MatrixXd> prev(n);
      auto accumulate = [&](int v, const Eigen::MatrixXd& g) {
        if (prev[v].size() == 0)
          prev[v] = g;
        else
          prev[v] += g;
      };
      for (int m = 0; m < n; ++m) {
        if (adj[m].size() == 0) continue;
        const auto W = layout_.W(thetas[m], l);
        const auto& nbrs = graph_.closed[m];
        const Eigen::MatrixXd gx =
            adj[m].leftCols(width) * tanh_slope(acts.preactivation[l][m]).asDiagonal();
        auto& t = touch(m);
        add_outer(t, layout_.w_offset(l), acts.aggregate[l][m], gx);
        const Eigen::MatrixXd gagg = gx * W.transpose();

        if (!gat) {
          for (int v : nbrs) accumulate(v, gagg);
          continue;
        }

        const auto a = layout_.a(thetas[m], l);
        const auto& beta = acts.attention[l][m];
        const auto& h = acts.projected[l][m];
        const auto self = std::find(nbrs.begin(), nbrs.end(), m) - nbrs.begin();
        const std::size_t deg = nbrs.size();

        Eigen::MatrixXd gbeta(r_out, deg);
        for (std::size_t s = 0; s < deg; ++s) gbeta.col(s) = gagg * feats[nbrs[s]];
        const Eigen::VectorXd weighted = gbeta * beta;
        Eigen::MatrixXd gc(r_out, deg);
        for (std::size_t s = 0; s < deg; ++s) gc.col(s) = beta(s) * (gbeta.col(s) - weighted);

        for (std::size_t s = 0; s < deg; ++s) accumulate(nbrs[s], beta(s) * gagg);

        const Eigen::VectorXd gc_total = gc.rowwise().sum();
        for (int r = 0; r < r_out; ++r) {
          t.col(r).segment(layout_.a_offset(l), width) += gc_total(r) * h.col(self);
          t.col(r).segment(layout_.a_offset(l) + width, width) += h * gc.row(r).transpose();
        }
        for (std::size_t s = 0; s < deg; ++s) {
          Eigen::MatrixXd gh = gc.col(s) * a.tail(width).transpose();
          if (static_cast<std::ptrdiff_t>(s) == self) gh += gc_total * a.head(width).transpose();
          add_outer(t, layout_.w_offset(l), feats[nbrs[s]], gh);
          accumulate(nbrs[s], gh * W.transpose());
        }
      }
      adj = std::move(prev);
    }

    for (int m = 0; m < n; ++m)
      if (jt[m].size() != 0) result.rows[i].push_back({m, jt[m].transpose()});
  }
  return result;
}

}  // namespace lbgnn
