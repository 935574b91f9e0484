#pragma once

#include <Eigen/Dense>

#include <string>

#include "pivc/ifir.hpp"
#include "pivc/vrft.hpp"

namespace pivc {

enum class EnvelopeMode { Elementwise, Spectral };

/// Knobs for the constrained synthesis. epsilon < 0 selects the sampling
/// bound epsilon_bound(m, grid_m, rho0, rho); ridge < 0 the regression
/// default; admm_penalty < 0 an automatic curvature-based scale.
struct SolverSettings {
  double rho0 = 2.0;
  double rho = 0.99;
  int grid_m = 1000;
  double epsilon = -1.0;
  double ridge = -1.0;
  EnvelopeMode envelope = EnvelopeMode::Elementwise;
  int max_iters = 50000;
  double tol_feas = 1e-7;
  double tol_rel_obj = 1e-8;
  int check_every = 25;
  double admm_penalty = -1.0;
  int dense_grid_points = 10001;
};

struct SynthesisProblem {
  RegressionData regression;
  SolverSettings settings;

  SynthesisProblem(RegressionData reg, SolverSettings s = {})
      : regression(std::move(reg)), settings(s) {}

  double resolved_epsilon() const;
  double resolved_ridge() const;
  double envelope_cap(int k) const;  // per-entry (elementwise) or spectral radius
};

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

struct SynthesisReport {
  IfirParams params;
  double objective_value = 0.0;
  KktResidual kkt;
  double max_constraint_violation = 0.0;
  int iterations = 0;
  double wall_time_s = 0.0;
  PassivityCertificate certificate;
  double unconstrained_objective = 0.0;
};

/// Constrained VRFT synthesis: quadratic cost subject to Gamma PSD, the
/// tap decay envelope and the sampled positive-realness constraints.
/// Operator splitting with lifted cone variables; the returned iterate is
/// feasibility-polished to within settings.tol_feas.
SynthesisReport synthesize_passive(const SynthesisProblem& problem);

/// Frobenius-nearest symmetric matrix with eigenvalues clipped at floor.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& a, double floor_value = 0.0);

/// KKT diagnostics at an arbitrary parameter point; multipliers recovered
/// from the active set by nonnegative least squares.
KktResidual kkt_residual(const SynthesisProblem& problem, const IfirParams& params);

/// Independent slow oracle: projected gradient descent with alternating
/// feasibility projections. Intended for small instances in tests.
SynthesisReport cross_check_projected_gradient(const SynthesisProblem& problem);

/// Max violation of the three constraint families at params (eigenvalue
/// checks on the synthesis grid).
double constraint_violation(const SynthesisProblem& problem, const IfirParams& params);

}  // namespace pivc
