#pragma once

#include "lbgnn/graph.hpp"
#include "lbgnn/nets.hpp"
#include "lbgnn/state.hpp"

#include <span>
#include <vector>

namespace lbgnn {

struct ControlConfig {
  double alpha1 = 0.85;
  double alpha2 = 2.45;
  double k1 = 6.5;
  double k2 = 3.85;
  double k3 = 0.01;
  double k4 = 0.08;
  double gamma1 = 0.875;
  double gamma2 = 0.875;
  double theta_bar = 10.0;
  double band = 0.0;       // projection band c; <= 0 selects 0.1 * theta_bar^2
  double lipschitz = 0.0;  // L for the gain certificate; <= 0 estimates it from the target drift
  double dt = 0.005;
  double duration = 60.0;
  unsigned long long seed = 0;

  double projection_band() const { return band > 0 ? band : 0.1 * theta_bar * theta_bar; }
  /// Throws std::invalid_argument unless every gain, theta_bar, dt and duration is positive.
  void validate() const;
};

struct ErrorSignals {
  Vec3 e, de;              // q0 - q_i
  Vec3 q_tilde, dq_tilde;  // q0 - q0_hat_i
  Vec3 e_hat, de_hat;      // q0_hat_i - q_i
  Vec3 r1, r2;
};

ErrorSignals compute_errors(const SimState& state, int i, const ControlConfig& cfg);

/// Sum over z of d(phi_i)/d(theta_z) (theta_i - theta_z).
Vec3 weight_consensus(const EnsembleJacobian& jac, std::span<const Eigen::VectorXd> thetas, int i);

/// Sum over z of d(phi_i)/d(theta_z), a d_out x p matrix.
Eigen::MatrixXd summed_jacobian(const EnsembleJacobian& jac, int i, Eigen::Index params);

/// Measurable form of r1 for agent i: relative estimate differences over N_i
/// plus the pin-gated target terms. Equals (H r1)_i.
Vec3 observer_innovation(int i, const SimState& state, const Topology& topology,
                         const ControlConfig& cfg);

Vec3 observer_accel(int i, const SimState& state, std::span<const Eigen::VectorXd> phi1,
                    const EnsembleJacobian& jac1, const Topology& topology,
                    const ControlConfig& cfg);

Vec3 control_input(int i, const SimState& state, const Vec3& observer_acc,
                   std::span<const Eigen::VectorXd> phi2, const EnsembleJacobian& jac2,
                   const ControlConfig& cfg);

/// Projection onto the ball ||b||^2 <= theta_bar^2 + c with P(b) = ||b||^2 - theta_bar^2.
/// Gamma is a positive scalar multiple of the identity, so it cancels in the
/// correction term and is not an argument.
Eigen::VectorXd project(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double theta_bar,
                        double band);

Eigen::VectorXd update_law_observer(int i, const SimState& state, const EnsembleJacobian& jac1,
                                    const Topology& topology, const ControlConfig& cfg);

Eigen::VectorXd update_law_controller(int i, const SimState& state, const EnsembleJacobian& jac2,
                                      const Topology& topology, const ControlConfig& cfg);

struct GainCertificate {
  int n_agents = 0;
  double lipschitz = 0;
  double lambda_min = 0, lambda_max = 0;  // bounds on the interaction spectrum
  double eps1 = 0, eps2 = 0, eps3 = 0;
  double eps2_upper = 0;
  double eps1_denominator = 0;
  double k1_bound = 0, k2_bound = 0;
  double k1_margin = 0, k2_margin = 0;
  bool eps3_ok = false, eps1_ok = false, eps2_ok = false, k1_ok = false, k2_ok = false;
  double lambda1 = 0, lambda2 = 0, lambda3 = 0;

  bool pass() const { return eps3_ok && eps1_ok && eps2_ok && k1_ok && k2_ok; }
};

/// eps3 and eps1 are taken 5% above their lower bounds, eps2 5% below its
/// upper bound; the k1 and k2 conditions are then evaluated at those values.
GainCertificate certify_gains(const ControlConfig& cfg, int n_agents, double lipschitz);

}  // namespace lbgnn
