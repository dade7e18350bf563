#pragma once

#include <Eigen/Dense>

#include <vector>

namespace lbgnn {

inline constexpr int kDim = 3;
using Vec3 = Eigen::Vector3d;

/// Full closed-loop state: target, agents, target estimates, and the weight
/// estimates of both networks.
struct SimState {
  double t = 0.0;
  Vec3 q0 = Vec3::Zero();
  Vec3 dq0 = Vec3::Zero();
  std::vector<Vec3> q, dq;            // agent kinematics
  std::vector<Vec3> q0_hat, dq0_hat;  // each agent's estimate of the target
  std::vector<Eigen::VectorXd> theta1, theta2;

  int agents() const { return static_cast<int>(q.size()); }
};

}  // namespace lbgnn
