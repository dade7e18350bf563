#include "lbgnn/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace lbgnn {

Vec3 target_accel(const Vec3& q0, const Vec3& dq0) {
  const double vx = dq0.x(), vy = dq0.y(), vz = dq0.z();
  const double y = q0.y();
  return {std::cos(vx) - std::sin(vy) + std::cos(2.0 * vz),
          vx - vy + vz + y / std::sqrt(1.0 + std::abs(y)),
          std::sin(vy) - vx * vz};
}

Eigen::Matrix<double, 3, 6> target_jacobian(const Vec3& q0, const Vec3& dq0) {
  const double vx = dq0.x(), vy = dq0.y(), vz = dq0.z();
  const double ay = std::abs(q0.y());
  Eigen::Matrix<double, 3, 6> j = Eigen::Matrix<double, 3, 6>::Zero();
  j(0, 3) = -std::sin(vx);
  j(0, 4) = -std::cos(vy);
  j(0, 5) = -2.0 * std::sin(2.0 * vz);
  j(1, 1) = (2.0 + ay) / (2.0 * std::pow(1.0 + ay, 1.5));
  j(1, 3) = 1.0;
  j(1, 4) = -1.0;
  j(1, 5) = 1.0;
  j(2, 3) = -vz;
  j(2, 4) = std::cos(vy);
  j(2, 5) = -vx;
  return j;
}

double estimate_target_lipschitz(double position_radius, double velocity_radius, int points) {
  if (!(position_radius > 0) || !(velocity_radius > 0) || points < 2)
    throw std::invalid_argument("Lipschitz box needs positive radii and at least two points per axis");
  std::vector<double> pos(points), vel(points);
  for (int k = 0; k < points; ++k) {
    const double s = -1.0 + 2.0 * k / (points - 1);
    pos[k] = s * position_radius;
    vel[k] = s * velocity_radius;
  }
  double best = 0.0;
  // Only y0 and the velocities enter the Jacobian, so x0 and z0 need no sweep.
  for (double y : pos)
    for (double vx : vel)
      for (double vy : vel)
        for (double vz : vel) {
          const auto j = target_jacobian(Vec3(0, y, 0), Vec3(vx, vy, vz));
          Eigen::JacobiSVD<Eigen::Matrix<double, 3, 6>> svd(j);
          best = std::max(best, svd.singularValues()(0));
        }
  return best;
}

Vec3 interaction(const Vec3& qi, const Vec3& dqi, const Vec3& qj, const Vec3& dqj, double floor) {
  const double dy = qi.y() - qj.y();
  const double dvx = dqi.x() - dqj.x();
  return {1.0 / std::max(20000.0 * dy * dy, floor),
          (dqi.z() - dqj.z()) * std::cos(dqi.x()),
          std::cos(dqi.z() * dqj.z()) * dvx / std::sqrt(1.0 + std::abs(dvx))};
}

Vec3 agent_accel(int i, std::span<const Vec3> q, std::span<const Vec3> dq, const Topology& t, double floor) {
  Vec3 acc = Vec3::Zero();
  for (auto [a, b] : t.edges) {
    if (a == i) acc += interaction(q[i], dq[i], q[b], dq[b], floor);
    else if (b == i) acc += interaction(q[i], dq[i], q[a], dq[a], floor);
  }
  return acc;
}

Eigen::VectorXd masked_state(int i, std::span<const Vec3> q, std::span<const Vec3> dq,
                             const MessageGraph& graph) {
  const int n = static_cast<int>(q.size());
  Eigen::VectorXd r = Eigen::VectorXd::Zero(2 * kDim * n);
  for (int m : graph.closed[i]) {
    r.segment<kDim>(2 * kDim * m) = q[m];
    r.segment<kDim>(2 * kDim * m + kDim) = dq[m];
  }
  return r;
}

InitialPositions ngon_initial_conditions(int n_agents, double radius, double phase) {
  if (n_agents < 1) throw std::invalid_argument("N must be positive");
  InitialPositions p;
  for (int i = 1; i <= n_agents; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / n_agents + phase;
    p.q.emplace_back(radius * std::cos(angle), radius * std::sin(angle), 0.0);
    p.dq.push_back(Vec3::Zero());
  }
  return p;
}

LayerSpec default_layer_spec(Arch arch, int d_in) {
  LayerSpec s;
  s.d_in = d_in;
  s.d_out = kDim;
  s.hidden.assign(arch == Arch::dnn ? 6 : 2, 24);
  return s;
}

void Scenario::validate() const {
  control.validate();
  if (topology.n_agents < 1) throw std::invalid_argument("scenario needs at least one agent");
  if (!topology.connected()) throw std::invalid_argument("topology is disconnected");
  if (topology.pin_count() < 1) throw std::invalid_argument("at least one agent must be pinned");
  if (spec1 && (spec1->d_in != 2 * kDim || spec1->d_out != kDim))
    throw std::invalid_argument("observer network must map 6 inputs to 3 outputs");
  if (spec2 && (spec2->d_in != 2 * kDim * topology.n_agents || spec2->d_out != kDim))
    throw std::invalid_argument("controller network must map 6N inputs to 3 outputs");
  if (!(divergence_threshold > 0)) throw std::invalid_argument("divergence threshold must be positive");
}

namespace {

Network make_network(Arch arch, const std::optional<LayerSpec>& spec, int d_in, const Topology& t) {
  return Network(arch, spec ? *spec : default_layer_spec(arch, d_in), MessageGraph::from(t));
}

const Scenario& checked(const Scenario& s) {
  s.validate();
  return s;
}

}  // namespace

ClosedLoop::ClosedLoop(Scenario scenario)
    : scenario_(std::move(checked(scenario))),
      net1_(make_network(scenario_.arch1, scenario_.spec1, 2 * kDim, scenario_.topology)),
      net2_(make_network(scenario_.arch2, scenario_.spec2, 2 * kDim * scenario_.topology.n_agents,
                         scenario_.topology)),
      graph_(MessageGraph::from(scenario_.topology)) {}

SimState ClosedLoop::initial_state(std::uint64_t seed) const {
  const int n = scenario_.topology.n_agents;
  const auto ic = ngon_initial_conditions(n, scenario_.radius, scenario_.phase);
  SimState s;
  s.q0 = scenario_.target_position;
  s.dq0 = scenario_.target_velocity;
  s.q = ic.q;
  s.dq = ic.dq;
  s.q0_hat = ic.q;
  s.dq0_hat = ic.dq;
  std::mt19937_64 split(seed);
  const std::uint64_t seed1 = split(), seed2 = split();
  s.theta1 = init_weights(net1_.layout(), n, seed1, scenario_.init1.value_or(default_init(scenario_.arch1)));
  s.theta2 = init_weights(net2_.layout(), n, seed2, scenario_.init2.value_or(default_init(scenario_.arch2)));
  return s;
}

Eigen::Index ClosedLoop::state_size() const {
  const Eigen::Index n = scenario_.topology.n_agents;
  return 2 * kDim + 4 * kDim * n + n * (net1_.layout().size() + net2_.layout().size());
}

Eigen::VectorXd ClosedLoop::pack(const SimState& s) const {
  const int n = scenario_.topology.n_agents;
  const Eigen::Index p1 = net1_.layout().size(), p2 = net2_.layout().size();
  Eigen::VectorXd x(state_size());
  Eigen::Index o = 0;
  auto put3 = [&](const Vec3& v) {
    x.segment<kDim>(o) = v;
    o += kDim;
  };
  put3(s.q0);
  put3(s.dq0);
  for (int i = 0; i < n; ++i) {
    put3(s.q[i]);
    put3(s.dq[i]);
    put3(s.q0_hat[i]);
    put3(s.dq0_hat[i]);
  }
  for (int i = 0; i < n; ++i, o += p1) x.segment(o, p1) = s.theta1[i];
  for (int i = 0; i < n; ++i, o += p2) x.segment(o, p2) = s.theta2[i];
  return x;
}

SimState ClosedLoop::unpack(const Eigen::VectorXd& x, double t) const {
  if (x.size() != state_size()) throw std::invalid_argument("state vector has the wrong length");
  const int n = scenario_.topology.n_agents;
  const Eigen::Index p1 = net1_.layout().size(), p2 = net2_.layout().size();
  SimState s;
  s.t = t;
  Eigen::Index o = 0;
  auto get3 = [&]() {
    Vec3 v = x.segment<kDim>(o);
    o += kDim;
    return v;
  };
  s.q0 = get3();
  s.dq0 = get3();
  for (int i = 0; i < n; ++i) {
    s.q.push_back(get3());
    s.dq.push_back(get3());
    s.q0_hat.push_back(get3());
    s.dq0_hat.push_back(get3());
  }
  for (int i = 0; i < n; ++i, o += p1) s.theta1.emplace_back(x.segment(o, p1));
  for (int i = 0; i < n; ++i, o += p2) s.theta2.emplace_back(x.segment(o, p2));
  return s;
}

SimState ClosedLoop::derivative_state(const SimState& s, StageRecord* record) const {
  const int n = scenario_.topology.n_agents;
  const auto& topo = scenario_.topology;
  const auto& cfg = scenario_.control;

  std::vector<Eigen::VectorXd> in1(n), in2(n);
  for (int i = 0; i < n; ++i) {
    in1[i].resize(2 * kDim);
    in1[i] << s.q0_hat[i], s.dq0_hat[i];
    in2[i] = masked_state(i, s.q, s.dq, graph_);
  }
  const auto acts1 = net1_.forward(s.theta1, in1);
  const auto acts2 = net2_.forward(s.theta2, in2);
  const auto jac1 = net1_.ensemble_jacobian(acts1, s.theta1);
  const auto jac2 = net2_.ensemble_jacobian(acts2, s.theta2);

  SimState d;
  d.t = 1.0;
  d.q0 = s.dq0;
  d.dq0 = target_accel(s.q0, s.dq0);
  if (record) {
    record->target = d.dq0;
    record->phi1.assign(n, Vec3::Zero());
    record->phi2.assign(n, Vec3::Zero());
    record->observer.assign(n, Vec3::Zero());
    record->u.assign(n, Vec3::Zero());
    record->drift.assign(n, Vec3::Zero());
  }
  for (int i = 0; i < n; ++i) {
    const Vec3 obs = observer_accel(i, s, acts1.outputs, jac1, topo, cfg);
    const Vec3 u = control_input(i, s, obs, acts2.outputs, jac2, cfg);
    const Vec3 drift = agent_accel(i, s.q, s.dq, topo, scenario_.interaction_floor);
    d.q.push_back(s.dq[i]);
    d.dq.push_back(drift + u);
    d.q0_hat.push_back(s.dq0_hat[i]);
    d.dq0_hat.push_back(obs);
    d.theta1.push_back(update_law_observer(i, s, jac1, topo, cfg));
    d.theta2.push_back(update_law_controller(i, s, jac2, topo, cfg));
    if (record) {
      record->phi1[i] = acts1.outputs[i];
      record->phi2[i] = acts2.outputs[i];
      record->observer[i] = obs;
      record->u[i] = u;
      record->drift[i] = drift;
    }
  }
  return d;
}

Eigen::VectorXd ClosedLoop::derivative(const Eigen::VectorXd& x, double t, StageRecord* record) const {
  return pack(derivative_state(unpack(x, t), record));
}

void ClosedLoop::clamp_weights(Eigen::VectorXd& x) const {
  const auto& cfg = scenario_.control;
  const double limit = cfg.theta_bar * cfg.theta_bar + cfg.projection_band();
  const int n = scenario_.topology.n_agents;
  Eigen::Index o = 2 * kDim + 4 * kDim * n;
  for (const Eigen::Index p : {net1_.layout().size(), net2_.layout().size()})
    for (int i = 0; i < n; ++i, o += p) {
      auto seg = x.segment(o, p);
      const double sq = seg.squaredNorm();
      if (sq > limit) seg *= std::sqrt(limit / sq);
    }
}

SimState ClosedLoop::step(const SimState& s, double dt) const {
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const Eigen::VectorXd x = pack(s);
  const Eigen::VectorXd k1 = derivative(x, s.t);
  const Eigen::VectorXd k2 = derivative(x + 0.5 * dt * k1, s.t + 0.5 * dt);
  const Eigen::VectorXd k3 = derivative(x + 0.5 * dt * k2, s.t + 0.5 * dt);
  const Eigen::VectorXd k4 = derivative(x + dt * k3, s.t + dt);
  Eigen::VectorXd next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  clamp_weights(next);
  if (!next.allFinite()) throw std::runtime_error("non-finite state at t = " + std::to_string(s.t + dt));
  return unpack(next, s.t + dt);
}

RunResult run_scenario(const Scenario& scenario) {
  const auto start = std::chrono::steady_clock::now();
  const ClosedLoop loop(scenario);
  const auto& cfg = scenario.control;
  const int n = scenario.topology.n_agents;
  const auto steps = static_cast<Eigen::Index>(std::llround(cfg.duration / cfg.dt));

  RunResult res;
  res.projection_limit = cfg.theta_bar * cfg.theta_bar + cfg.projection_band();
  const double lipschitz = cfg.lipschitz > 0 ? cfg.lipschitz : estimate_target_lipschitz();
  res.certificate = certify_gains(cfg, n, lipschitz);
  for (auto* m : {&res.e, &res.de, &res.q_tilde, &res.u, &res.phi1_err, &res.phi2_err})
    m->resize(steps + 1, n);
  res.t.reserve(steps + 1);

  auto track_weights = [&](const SimState& s) {
    for (int i = 0; i < n; ++i) {
      res.max_theta1_sq = std::max(res.max_theta1_sq, s.theta1[i].squaredNorm());
      res.max_theta2_sq = std::max(res.max_theta2_sq, s.theta2[i].squaredNorm());
    }
  };
  auto sample = [&](const SimState& s, const StageRecord& rec, Eigen::Index k) {
    res.t.push_back(s.t);
    for (int i = 0; i < n; ++i) {
      res.e(k, i) = (s.q0 - s.q[i]).norm();
      res.de(k, i) = (s.dq0 - s.dq[i]).norm();
      res.q_tilde(k, i) = (s.q0 - s.q0_hat[i]).norm();
      res.u(k, i) = rec.u[i].norm();
      res.phi1_err(k, i) = (rec.phi1[i] - rec.target).norm();
      res.phi2_err(k, i) = (rec.phi2[i] - rec.drift[i]).norm();
    }
  };

  // The first RK4 stage is evaluated at the sample point, so its record
  // doubles as the metric sample for that step.
  SimState s = loop.initial_state(cfg.seed);
  Eigen::VectorXd x = loop.pack(s);
  const double dt = cfg.dt;
  Eigen::Index k = 0;
  try {
    for (k = 0;; ++k) {
      const double t = static_cast<double>(k) * dt;
      s = loop.unpack(x, t);
      track_weights(s);
      StageRecord rec;
      const Eigen::VectorXd k1 = loop.derivative(x, t, &rec);
      sample(s, rec, k);
      if (k == steps) break;
      const Eigen::VectorXd k2 = loop.derivative(x + 0.5 * dt * k1, t + 0.5 * dt);
      const Eigen::VectorXd k3 = loop.derivative(x + 0.5 * dt * k2, t + 0.5 * dt);
      const Eigen::VectorXd k4 = loop.derivative(x + dt * k3, t + dt);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      loop.clamp_weights(x);
      const double size = x.norm();
      if (!std::isfinite(size) || size > scenario.divergence_threshold)
        throw std::runtime_error("state norm exceeded the divergence threshold");
    }
  } catch (const std::runtime_error& err) {
    res.diverged = true;
    res.diverged_at = static_cast<double>(k + 1) * dt;
    res.failure = err.what();
    for (auto* m : {&res.e, &res.de, &res.q_tilde, &res.u, &res.phi1_err, &res.phi2_err})
      m->conservativeResize(static_cast<Eigen::Index>(res.t.size()), n);
  }
  res.final_state = s;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace lbgnn
