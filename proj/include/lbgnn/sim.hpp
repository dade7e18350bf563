#pragma once

#include "lbgnn/control.hpp"
#include "lbgnn/graph.hpp"
#include "lbgnn/nets.hpp"
#include "lbgnn/state.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lbgnn {

/// Target drift f(Q0).
Vec3 target_accel(const Vec3& q0, const Vec3& dq0);

/// d f / d[q0; dq0], 3 x 6.
Eigen::Matrix<double, 3, 6> target_jacobian(const Vec3& q0, const Vec3& dq0);

/// Largest spectral norm of target_jacobian over a grid of `points` per axis on
/// the box |q0_k| <= position_radius, |dq0_k| <= velocity_radius.
double estimate_target_lipschitz(double position_radius = 20.0, double velocity_radius = 5.0,
                                 int points = 5);

/// Default floor on the denominator 20000 (y_i - y_j)^2. Caps the y-coupling
/// push at 1 m/s^2 per neighbor; the term is exact for |y_i - y_j| >= 7.1 mm.
inline constexpr double kInteractionFloor = 1.0;

/// Pairwise interaction of agent i with neighbor j. The denominator
/// 20000 (y_i - y_j)^2 of the first component is floored at `floor`.
Vec3 interaction(const Vec3& qi, const Vec3& dqi, const Vec3& qj, const Vec3& dqj,
                 double floor = kInteractionFloor);

/// Agent drift h(R_i): sum of interactions over N_i (control input excluded).
Vec3 agent_accel(int i, std::span<const Vec3> q, std::span<const Vec3> dq, const Topology& topology,
                 double floor = kInteractionFloor);

/// Masked stacked state R_i = [1(m in closed N_i) (q_m; dq_m)]_m, length 6N.
Eigen::VectorXd masked_state(int i, std::span<const Vec3> q, std::span<const Vec3> dq,
                             const MessageGraph& graph);

struct InitialPositions {
  std::vector<Vec3> q, dq;
};

/// Agent i (1-based) at radius [cos(a_i), sin(a_i), 0] with a_i = 2 pi i/N + phase, at rest.
InitialPositions ngon_initial_conditions(int n_agents, double radius, double phase = 0.0);

/// 2 x 24 hidden layers for GNN/GAT, 6 x 24 for DNN, three outputs.
LayerSpec default_layer_spec(Arch arch, int d_in);

struct Scenario {
  Topology topology;
  Arch arch1 = Arch::gnn;  // observer network, input Q0_hat_i
  Arch arch2 = Arch::gnn;  // controller network, input R_i
  std::optional<LayerSpec> spec1, spec2;
  std::optional<InitOptions> init1, init2;
  ControlConfig control;
  double radius = 10.0;
  double phase = 0.0;  // rotation of the starting polygon, radians
  double interaction_floor = kInteractionFloor;
  Vec3 target_position{-3.0, 2.0, 10.0};
  Vec3 target_velocity{-1.0, 0.0, -2.0};
  double divergence_threshold = 1e6;

  /// Throws std::invalid_argument on a disconnected or unpinned topology,
  /// bad gains, or mismatched layer specs.
  void validate() const;
};

/// Per-agent quantities from one right-hand-side evaluation.
struct StageRecord {
  std::vector<Vec3> phi1, phi2, observer, u, drift;
  Vec3 target = Vec3::Zero();
};

/// The coupled ODE of target, agents, observers and both weight sets, packed
/// into one state vector for integration.
class ClosedLoop {
 public:
  explicit ClosedLoop(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  const Network& observer_net() const { return net1_; }
  const Network& controller_net() const { return net2_; }

  SimState initial_state(std::uint64_t seed) const;

  Eigen::VectorXd pack(const SimState& s) const;
  SimState unpack(const Eigen::VectorXd& x, double t) const;
  Eigen::Index state_size() const;

  /// dx/dt at x. Fills `record` when given.
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, double t, StageRecord* record = nullptr) const;
  SimState derivative_state(const SimState& s, StageRecord* record = nullptr) const;

  /// Radially rescales any weight vector with ||theta||^2 above
  /// theta_bar^2 + c back onto that sphere. Applied after every step.
  void clamp_weights(Eigen::VectorXd& x) const;

  /// One classical RK4 step. Throws std::runtime_error on a non-finite state.
  SimState step(const SimState& s, double dt) const;

 private:
  Scenario scenario_;
  Network net1_, net2_;
  MessageGraph graph_;
};

struct RunResult {
  std::vector<double> t;
  // K x N per-agent norms at each recorded time.
  Eigen::MatrixXd e, de, q_tilde, u, phi1_err, phi2_err;
  double max_theta1_sq = 0, max_theta2_sq = 0;
  double projection_limit = 0;  // theta_bar^2 + c
  bool diverged = false;
  double diverged_at = 0;
  std::string failure;
  SimState final_state;
  GainCertificate certificate;
  double wall_seconds = 0;
};

/// Integrates over [0, duration] with fixed dt, sampling every step.
RunResult run_scenario(const Scenario& scenario);

}  // namespace lbgnn
