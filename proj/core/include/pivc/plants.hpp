#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "pivc/lti.hpp"

namespace pivc {

/// One damped structural resonance hanging off the motor-side inertia.
struct FlexibleMode {
  double stiffness = 0.0;  // N*m/rad
  double damping = 0.0;    // N*m*s/rad
  double inertia = 0.0;    // kg*m^2
};

/// Flexible-load joint: rigid damped rotor plus series mode admittances.
struct FlexibleJointParams {
  double motor_inertia = 0.02;
  double motor_damping = 0.1;
  std::vector<FlexibleMode> modes;
};

/// Coupled rigid-body Cartesian dynamics M v' + D v + K x = F.
struct CoupledCartesianParams {
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d damping = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d stiffness = Eigen::Matrix3d::Zero();
};

struct PositiveRealReport {
  bool verdict = false;
  double min_eig = 0.0;
  double argmin_omega = 0.0;  // rad/s (continuous) or theta in [0,pi] (discrete)
};

/// SISO torque -> joint velocity map, positive real by construction.
/// Order is 1 + 2*|modes|.
ContinuousTf flexible_joint_plant(const FlexibleJointParams& p);

/// 3x3 force -> velocity map v = (Ms + D + K/s)^-1 F.
ContinuousTf coupled_cartesian_plant(const CoupledCartesianParams& p);

/// Strictly-output-passive discrete model: random positive-real sections
/// (Tustin-discretized) in parallel plus direct output damping.
DiscreteSs random_passive_plant(std::uint64_t seed, int order, int channels, double ts = 1e-3);

PositiveRealReport is_positive_real(const ContinuousTf& model, int grid_points = 10001, double tol = 1e-9);
PositiveRealReport is_positive_real(const DiscreteSs& model, int grid_points = 10001, double tol = 1e-9);

// Bundled operating points for the experiments.
FlexibleJointParams long_plate_preset();
FlexibleJointParams short_plate_preset();
CoupledCartesianParams cartesian3_preset();

/// Resonance frequencies (imaginary parts of complex pole pairs), ascending.
std::vector<double> resonance_frequencies(const ContinuousTf& model);

}  // namespace pivc
