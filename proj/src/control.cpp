#include "lbgnn/control.hpp"

#include <algorithm>
#include <stdexcept>

namespace lbgnn {
namespace {

// Calls f(j) for every neighbor j of i without building adjacency lists.
template <typename F>
void for_each_neighbor(const Topology& t, int i, F&& f) {
  for (auto [a, b] : t.edges) {
    if (a == i) f(b);
    else if (b == i) f(a);
  }
}

// -k (sum_{j in N_i}(theta_i - theta_j) + theta_i)
Eigen::VectorXd leakage(const std::vector<Eigen::VectorXd>& thetas, int i, const Topology& t,
                        double k) {
  Eigen::VectorXd acc = thetas[i];
  for_each_neighbor(t, i, [&](int j) { acc += thetas[i] - thetas[j]; });
  return -k * acc;
}

}  // namespace

void ControlConfig::validate() const {
  for (double v : {alpha1, alpha2, k1, k2, k3, k4, gamma1, gamma2, theta_bar, dt, duration})
    if (!(v > 0)) throw std::invalid_argument("gains, theta_bar, dt and duration must be positive");
}

ErrorSignals compute_errors(const SimState& s, int i, const ControlConfig& cfg) {
  ErrorSignals out;
  out.e = s.q0 - s.q[i];
  out.de = s.dq0 - s.dq[i];
  out.q_tilde = s.q0 - s.q0_hat[i];
  out.dq_tilde = s.dq0 - s.dq0_hat[i];
  out.e_hat = s.q0_hat[i] - s.q[i];
  out.de_hat = s.dq0_hat[i] - s.dq[i];
  out.r1 = out.dq_tilde + cfg.alpha1 * out.q_tilde;
  out.r2 = out.de_hat + cfg.alpha2 * out.e_hat;
  return out;
}

Vec3 weight_consensus(const EnsembleJacobian& jac, std::span<const Eigen::VectorXd> thetas, int i) {
  Vec3 acc = Vec3::Zero();
  for (const auto& b : jac.rows[i])
    if (b.node != i) acc += b.value * (thetas[i] - thetas[b.node]);
  return acc;
}

Eigen::MatrixXd summed_jacobian(const EnsembleJacobian& jac, int i, Eigen::Index params) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(kDim, params);
  for (const auto& b : jac.rows[i]) acc += b.value;
  return acc;
}

Vec3 observer_innovation(int i, const SimState& s, const Topology& t, const ControlConfig& cfg) {
  Vec3 vel = Vec3::Zero();
  Vec3 pos = Vec3::Zero();
  for_each_neighbor(t, i, [&](int j) {
    vel += s.dq0_hat[j] - s.dq0_hat[i];
    pos += s.q0_hat[j] - s.q0_hat[i];
  });
  if (t.pins[i]) {
    vel += s.dq0 - s.dq0_hat[i];
    pos += s.q0 - s.q0_hat[i];
  }
  return vel + cfg.alpha1 * pos;
}

Vec3 observer_accel(int i, const SimState& s, std::span<const Eigen::VectorXd> phi1,
                    const EnsembleJacobian& jac1, const Topology& t, const ControlConfig& cfg) {
  return phi1[i] + weight_consensus(jac1, s.theta1, i) + cfg.k1 * observer_innovation(i, s, t, cfg);
}

Vec3 control_input(int i, const SimState& s, const Vec3& observer_acc,
                   std::span<const Eigen::VectorXd> phi2, const EnsembleJacobian& jac2,
                   const ControlConfig& cfg) {
  const Vec3 e_hat = s.q0_hat[i] - s.q[i];
  const Vec3 de_hat = s.dq0_hat[i] - s.dq[i];
  return observer_acc - phi2[i] - weight_consensus(jac2, s.theta2, i) +
         cfg.k2 * (de_hat + cfg.alpha2 * e_hat);
}

Eigen::VectorXd project(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double theta_bar,
                        double band) {
  if (!(band > 0)) throw std::invalid_argument("projection band must be positive");
  if (a.size() != b.size()) throw std::invalid_argument("projection arguments differ in length");
  const double nb2 = b.squaredNorm();
  const double p = nb2 - theta_bar * theta_bar;
  const double outward = b.dot(a);  // grad P = 2b
  if (p <= 0 || outward <= 0) return a;
  const double scale = std::min(1.0, p / band);
  return a - scale * (outward / nb2) * b;
}

Eigen::VectorXd update_law_observer(int i, const SimState& s, const EnsembleJacobian& jac1,
                                    const Topology& t, const ControlConfig& cfg) {
  const Eigen::Index p = s.theta1[i].size();
  Eigen::VectorXd aleph = leakage(s.theta1, i, t, cfg.k3);
  aleph.noalias() += summed_jacobian(jac1, i, p).transpose() * observer_innovation(i, s, t, cfg);
  aleph *= cfg.gamma1;
  return project(aleph, s.theta1[i], cfg.theta_bar, cfg.projection_band());
}

Eigen::VectorXd update_law_controller(int i, const SimState& s, const EnsembleJacobian& jac2,
                                      const Topology& t, const ControlConfig& cfg) {
  const Eigen::Index p = s.theta2[i].size();
  const Vec3 r2 = (s.dq0_hat[i] - s.dq[i]) + cfg.alpha2 * (s.q0_hat[i] - s.q[i]);
  Eigen::VectorXd aleph = leakage(s.theta2, i, t, cfg.k4);
  aleph.noalias() -= summed_jacobian(jac2, i, p).transpose() * r2;
  aleph *= cfg.gamma2;
  return project(aleph, s.theta2[i], cfg.theta_bar, cfg.projection_band());
}

GainCertificate certify_gains(const ControlConfig& cfg, int n_agents, double lipschitz) {
  if (n_agents < 1) throw std::invalid_argument("N must be positive");
  if (!(lipschitz > 0)) throw std::invalid_argument("Lipschitz constant must be positive");
  cfg.validate();
  GainCertificate c;
  c.n_agents = n_agents;
  c.lipschitz = lipschitz;
  const double a1 = cfg.alpha1, a2 = cfg.alpha2;
  const double nl = n_agents * lipschitz;
  const double lo = lambda_min_closed_form(n_agents);
  const double hi = lambda_max_bound(n_agents);
  c.lambda_min = lo;
  c.lambda_max = hi;

  const double eps3_lower = nl * hi * (1.0 / (2.0 * a1) + 0.5);
  c.eps3 = 1.05 * eps3_lower;
  c.eps3_ok = c.eps3 > eps3_lower;

  c.eps1_denominator = 2.0 * a1 - nl * hi * (1.0 + a1) / c.eps3;
  const double eps1_lower = (1.0 + a1 * a1 * hi) / c.eps1_denominator;
  c.eps1 = 1.05 * eps1_lower;
  c.eps1_ok = c.eps1_denominator > 0 && c.eps1 > eps1_lower;

  c.eps2_upper = 2.0 * a2 / (1.0 + a2 * a2);
  c.eps2 = 0.95 * c.eps2_upper;
  c.eps2_ok = c.eps2 < c.eps2_upper;

  c.k1_bound = hi / (lo * lo) * (2.0 * a1 + a1 * a1 * c.eps1 + nl * (2.0 + c.eps3 + a1 * c.eps3)) +
               c.eps1 / (lo * lo);
  c.k2_bound = 2.0 * a2 + (1.0 + a2 * a2) / c.eps2;
  c.k1_margin = cfg.k1 - c.k1_bound;
  c.k2_margin = cfg.k2 - c.k2_bound;
  c.k1_ok = c.k1_margin > 0;
  c.k2_ok = c.k2_margin > 0;

  c.lambda1 = 0.5 * std::min({1.0, lo, 1.0 / cfg.gamma1, 1.0 / cfg.gamma2});
  c.lambda2 = 0.5 * std::max({1.0, hi, 1.0 / cfg.gamma1, 1.0 / cfg.gamma2});
  c.lambda3 = std::min({a1 - (1.0 + a1 * a1 * hi) / (2.0 * c.eps1) - nl * hi * (1.0 + a1) / (2.0 * c.eps3),
                        a2 - (1.0 + a2 * a2) * c.eps2 / 2.0,
                        cfg.k1 * lo * lo / 2.0 - a1 * hi - (1.0 + a1 * a1 * hi) * c.eps1 / 2.0 -
                            nl * hi * (1.0 + a1) * c.eps3 / 2.0 - nl * hi,
                        cfg.k2 / 2.0 - a2 - (1.0 + a2 * a2) / (2.0 * c.eps2),
                        cfg.k3 / 2.0, cfg.k4 / 2.0});
  return c;
}

}  // namespace lbgnn
