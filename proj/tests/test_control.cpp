#include "lbgnn/control.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace lbgnn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SimState random_state(int n, int p, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto v3 = [&] { return Vec3(normal(rng), normal(rng), normal(rng)); };
  SimState s;
  s.q0 = v3();
  s.dq0 = v3();
  for (int i = 0; i < n; ++i) {
    s.q.push_back(v3());
    s.dq.push_back(v3());
    s.q0_hat.push_back(v3());
    s.dq0_hat.push_back(v3());
    s.theta1.push_back(oracle::random_vector(p, rng));
    s.theta2.push_back(oracle::random_vector(p, rng));
  }
  return s;
}

SimState still_state(int n, int p) {
  SimState s;
  for (int i = 0; i < n; ++i) {
    s.q.push_back(Vec3::Zero());
    s.dq.push_back(Vec3::Zero());
    s.q0_hat.push_back(Vec3::Zero());
    s.dq0_hat.push_back(Vec3::Zero());
    s.theta1.push_back(VectorXd::Zero(p));
    s.theta2.push_back(VectorXd::Zero(p));
  }
  return s;
}

EnsembleJacobian no_jacobian(int n) {
  EnsembleJacobian j;
  j.rows.resize(n);
  return j;
}

std::vector<VectorXd> zero_outputs(int n) { return std::vector<VectorXd>(n, VectorXd::Zero(3)); }

ControlConfig unit_filters() {
  ControlConfig c;
  c.alpha1 = c.alpha2 = 1.0;
  return c;
}

}  // namespace

TEST_CASE("error signals") {
  SimState s = still_state(1, 1);
  const auto zero = compute_errors(s, 0, ControlConfig{});
  CHECK(zero.e.norm() == 0.0);
  CHECK(zero.r1.norm() == 0.0);
  CHECK(zero.r2.norm() == 0.0);

  s.q0 = {1, 0, 0};
  const auto err = compute_errors(s, 0, unit_filters());
  CHECK(err.q_tilde == Vec3(1, 0, 0));
  CHECK(err.e == Vec3(1, 0, 0));
  CHECK(err.e_hat == Vec3::Zero());
  CHECK(err.r1 == Vec3(1, 0, 0));
  CHECK(err.r2 == Vec3::Zero());

  std::mt19937_64 rng(2);
  ControlConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = random_state(3, 1, rng);
    for (int i = 0; i < 3; ++i) {
      const auto x = compute_errors(r, i, cfg);
      CHECK((x.q_tilde - (x.e - x.e_hat)).norm() <= 1e-14);
      CHECK((x.dq_tilde - (x.de - x.de_hat)).norm() <= 1e-14);
      CHECK((x.r1 - (x.dq_tilde + cfg.alpha1 * x.q_tilde)).norm() == 0.0);
      CHECK((x.r2 - (x.de_hat + cfg.alpha2 * x.e_hat)).norm() == 0.0);
    }
  }
}

TEST_CASE("observer reduces to the network output at consensus without target access") {
  const auto t = make_topology(3, {{0, 1}, {1, 2}}, {false, false, true});
  std::mt19937_64 rng(3);
  SimState s = still_state(3, 4);
  s.q0 = {5, -2, 1};
  for (int i = 0; i < 3; ++i) {
    s.q0_hat[i] = {1, 2, 3};
    s.dq0_hat[i] = {0.5, 0, -1};
    s.theta1[i] = VectorXd::Constant(4, 0.3);
  }
  std::vector<VectorXd> phi;
  for (int i = 0; i < 3; ++i) phi.push_back(oracle::random_vector(3, rng));
  CHECK((observer_accel(0, s, phi, no_jacobian(3), t, ControlConfig{}) - phi[0]).norm() == 0.0);
}

TEST_CASE("observer correction for a lone pinned agent") {
  const auto t = make_topology(1, {}, {true});
  SimState s = still_state(1, 1);
  s.q0 = {1, 0, 0};
  const Vec3 acc = observer_accel(0, s, zero_outputs(1), no_jacobian(1), t, ControlConfig{});
  CHECK(acc.x() == doctest::Approx(5.525).epsilon(1e-14));
  CHECK(acc.y() == 0.0);
  CHECK(acc.z() == 0.0);
}

TEST_CASE("stacked observer corrections equal k1 H r1") {
  std::mt19937_64 rng(4);
  const Topology graphs[] = {make_topology(2, {{0, 1}}, {true, false}),
                             make_topology(3, {{0, 1}, {1, 2}}, {false, true, false}),
                             make_topology(3, {{0, 1}, {0, 2}, {1, 2}}, {true, false, true})};
  for (const auto& t : graphs) {
    const int n = t.n_agents;
    const auto h = graph_matrices(t, 3).interaction;
    for (int trial = 0; trial < 5; ++trial) {
      SimState s = random_state(n, 2, rng);
      for (auto& th : s.theta1) th.setZero();
      ControlConfig cfg;
      VectorXd r1(3 * n), stacked(3 * n);
      for (int i = 0; i < n; ++i) {
        r1.segment<3>(3 * i) = compute_errors(s, i, cfg).r1;
        stacked.segment<3>(3 * i) = observer_accel(i, s, zero_outputs(n), no_jacobian(n), t, cfg);
      }
      CHECK((stacked - cfg.k1 * h * r1).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("agents without target access ignore the target in the observer") {
  const auto t = make_topology(3, {{0, 1}, {1, 2}}, {true, false, false});
  std::mt19937_64 rng(5);
  SimState s = random_state(3, 2, rng);
  ControlConfig cfg;
  const auto phi = zero_outputs(3);
  const Vec3 before1 = observer_accel(1, s, phi, no_jacobian(3), t, cfg);
  const Vec3 before0 = observer_accel(0, s, phi, no_jacobian(3), t, cfg);
  const VectorXd law_before = update_law_observer(1, s, no_jacobian(3), t, cfg);
  s.q0 += Vec3(3, -1, 2);
  s.dq0 += Vec3(-1, 1, 0.5);
  CHECK((observer_accel(1, s, phi, no_jacobian(3), t, cfg) - before1).norm() == 0.0);
  CHECK((update_law_observer(1, s, no_jacobian(3), t, cfg) - law_before).norm() == 0.0);
  CHECK((observer_accel(0, s, phi, no_jacobian(3), t, cfg) - before0).norm() > 0.0);
}

TEST_CASE("controller") {
  SimState s = still_state(1, 1);
  const Vec3 obs(0.4, -0.2, 1.0);
  CHECK((control_input(0, s, obs, zero_outputs(1), no_jacobian(1), ControlConfig{}) - obs).norm() == 0.0);
  s.q0_hat[0] = {1, 0, 0};
  const Vec3 u = control_input(0, s, Vec3::Zero(), zero_outputs(1), no_jacobian(1), ControlConfig{});
  CHECK(u.x() == doctest::Approx(9.4325).epsilon(1e-14));
  CHECK(u.tail<2>().norm() == 0.0);
}

TEST_CASE("closed-loop r2 dynamics of one agent with an exact controller network") {
  // With phi2 equal to the true drift (zero here), qdd = u and e_hat_dd = obs - u.
  std::mt19937_64 rng(6);
  ControlConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    SimState s = random_state(1, 1, rng);
    const Vec3 obs = oracle::random_vector(3, rng);
    const Vec3 u = control_input(0, s, obs, zero_outputs(1), no_jacobian(1), cfg);
    const auto err = compute_errors(s, 0, cfg);
    const Vec3 edd_hat = obs - u;
    const Vec3 r2_dot = edd_hat + cfg.alpha2 * err.de_hat;
    const Vec3 expected = -(cfg.k2 - cfg.alpha2) * err.r2 - cfg.alpha2 * cfg.alpha2 * err.e_hat;
    CHECK((r2_dot - expected).norm() <= 1e-12);
  }
}

TEST_CASE("weight consensus and summed Jacobians") {
  EnsembleJacobian jac = no_jacobian(2);
  const MatrixXd b00 = MatrixXd::Constant(3, 2, 1.0), b01 = MatrixXd::Constant(3, 2, 2.0);
  jac.rows[0] = {{0, b00}, {1, b01}};
  const std::vector<VectorXd> thetas{VectorXd::Constant(2, 1.0), VectorXd::Constant(2, 0.5)};
  CHECK((weight_consensus(jac, thetas, 0) - Vec3::Constant(2.0)).norm() == 0.0);
  CHECK((summed_jacobian(jac, 0, 2) - MatrixXd::Constant(3, 2, 3.0)).norm() == 0.0);
  CHECK(summed_jacobian(jac, 1, 2).norm() == 0.0);
}

TEST_CASE("projection operator") {
  const double tb = 2.0, c = 0.4;
  const VectorXd inside = VectorXd::Constant(4, 0.5);
  const VectorXd a = VectorXd::LinSpaced(4, -1, 2);
  CHECK((project(a, inside, tb, c) - a).norm() == 0.0);

  VectorXd boundary = VectorXd::Zero(4);
  boundary(0) = std::sqrt(tb * tb + c);
  CHECK(project(boundary, boundary, tb, c).norm() <= 1e-15);
  CHECK(project(3.0 * boundary, boundary, tb, c).norm() <= 1e-14);
  VectorXd tangent = VectorXd::Zero(4);
  tangent(2) = 1.0;
  CHECK((project(tangent, boundary, tb, c) - tangent).norm() == 0.0);
  CHECK((project(-boundary, boundary, tb, c) + boundary).norm() == 0.0);

  // Inside the band the outward part is scaled by P/c.
  VectorXd mid = VectorXd::Zero(4);
  mid(1) = std::sqrt(tb * tb + 0.5 * c);
  const VectorXd half = project(mid, mid, tb, c);
  CHECK((half - 0.5 * mid).norm() <= 1e-14);

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd b = oracle::random_vector(6, rng);
    b *= std::sqrt(tb * tb + c) / b.norm();
    const VectorXd v = oracle::random_vector(6, rng);
    const VectorXd p = project(v, b, tb, c);
    CHECK(b.dot(p) <= 1e-12);
    CHECK(p.norm() <= v.norm() + 1e-12);
  }
  CHECK_THROWS_AS(project(a, inside, tb, 0.0), std::invalid_argument);
}

TEST_CASE("update laws at consensus leak toward zero") {
  const auto t = make_topology(3, {{0, 1}, {1, 2}}, {true, false, false});
  SimState s = still_state(3, 5);
  for (int i = 0; i < 3; ++i) s.theta1[i] = s.theta2[i] = VectorXd::LinSpaced(5, -0.2, 0.4);
  ControlConfig cfg;
  const VectorXd d1 = update_law_observer(1, s, no_jacobian(3), t, cfg);
  CHECK((d1 + cfg.gamma1 * cfg.k3 * s.theta1[1]).norm() <= 1e-15);
  const VectorXd d2 = update_law_controller(1, s, no_jacobian(3), t, cfg);
  CHECK((d2 + cfg.gamma2 * cfg.k4 * s.theta2[1]).norm() <= 1e-15);
}

TEST_CASE("update laws follow the Jacobian transpose of the error signal") {
  const auto t = make_topology(1, {}, {true});
  ControlConfig cfg;
  cfg.k3 = cfg.k4 = 1e-300;
  SimState s = still_state(1, 3);
  EnsembleJacobian jac = no_jacobian(1);
  jac.rows[0] = {{0, MatrixXd::Identity(3, 3)}};

  // Observer surrogate = b q_tilde_dot + alpha1 b q_tilde = [1, 0, 0] here.
  s.dq0 = {1, 0, 0};
  const VectorXd d1 = update_law_observer(0, s, jac, t, cfg);
  CHECK((d1 - cfg.gamma1 * Vec3(1, 0, 0)).norm() <= 1e-15);

  // Controller: -Gamma2 grad^T r2 with r2 = [0, 1, 0].
  SimState c = still_state(1, 3);
  c.dq0_hat[0] = {0, 1, 0};
  const VectorXd d2 = update_law_controller(0, c, jac, t, cfg);
  CHECK((d2 + cfg.gamma2 * Vec3(0, 1, 0)).norm() <= 1e-15);
}

TEST_CASE("gain certificate arithmetic") {
  ControlConfig cfg;
  const auto c = certify_gains(cfg, 6, 7.5);
  const double a2 = 2.45;
  CHECK(c.eps2_upper == doctest::Approx(2 * a2 / (1 + a2 * a2)).epsilon(1e-15));
  CHECK(std::abs(c.eps2_upper - 0.699746) <= 1e-5);
  CHECK(c.k2_bound == doctest::Approx(2 * a2 + (1 + a2 * a2) / c.eps2).epsilon(1e-15));
  CHECK(2 * a2 + (1 + a2 * a2) / 0.6997 == doctest::Approx(14.91).epsilon(1e-3));
  CHECK_FALSE(c.k2_ok);
  CHECK_FALSE(c.pass());
  CHECK(c.lambda_min == doctest::Approx(lambda_min_closed_form(6)));
  CHECK(c.lambda_max == 7.0);
  CHECK(c.lambda1 == doctest::Approx(0.5 * lambda_min_closed_form(6)));
  CHECK(c.lambda2 == doctest::Approx(3.5));
  CHECK(c.eps3_ok);
  CHECK(c.eps2_ok);
  CHECK_THROWS_AS(certify_gains(cfg, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(certify_gains(cfg, 6, 0.0), std::invalid_argument);
}

TEST_CASE("k1 bound with a vanishing Lipschitz constant") {
  ControlConfig cfg;
  cfg.alpha1 = 1.0;
  const auto c = certify_gains(cfg, 1, 1e-12);
  // N = 1: lambda_min = 1, lambda_max = 2. eps3 scales with L, so the ratio
  // N L lambda_max (1 + alpha1) / eps3 stays 4 / 2.1 as L -> 0.
  const double eps1 = 1.05 * 3.0 / (2.0 - 4.0 / 2.1);
  CHECK(c.eps1 == doctest::Approx(eps1).epsilon(1e-9));
  CHECK(c.k1_bound == doctest::Approx(2.0 * (2.0 + c.eps1) + c.eps1).epsilon(1e-9));
  double last = c.k1_bound;
  for (double l : {1e-3, 1e-2, 0.1, 1.0, 5.0}) {
    const auto next = certify_gains(cfg, 1, l);
    CHECK(next.k1_bound > last);
    last = next.k1_bound;
  }
}

TEST_CASE("raising k1 or k2 never breaks a passing condition") {
  ControlConfig cfg;
  cfg.alpha1 = 1.0;
  double k1_prev_margin = -1e300, k2_prev_margin = -1e300;
  bool k1_passed = false, k2_passed = false;
  for (double k = 1.0; k < 1e4; k *= 1.5) {
    cfg.k1 = cfg.k2 = k;
    const auto c = certify_gains(cfg, 2, 0.01);
    CHECK(c.k1_margin > k1_prev_margin);
    CHECK(c.k2_margin > k2_prev_margin);
    if (k1_passed) CHECK(c.k1_ok);
    if (k2_passed) CHECK(c.k2_ok);
    k1_passed = k1_passed || c.k1_ok;
    k2_passed = k2_passed || c.k2_ok;
    k1_prev_margin = c.k1_margin;
    k2_prev_margin = c.k2_margin;
  }
  CHECK(k1_passed);
  CHECK(k2_passed);
}

TEST_CASE("config validation") {
  ControlConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.projection_band() == doctest::Approx(10.0));
  cfg.k3 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
