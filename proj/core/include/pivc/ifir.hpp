#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "pivc/lti.hpp"
#include "pivc/signal.hpp"

namespace pivc {

/// Integral-plus-FIR controller parameters:
///   u(t) = sum_k H_k e(t-k) + Ts * Gamma * sum_{k<=t} e(k).
struct IfirParams {
  std::vector<Eigen::MatrixXd> taps;  // H_0 .. H_{m-1}, each n_c x n_c
  Eigen::MatrixXd gamma;              // n_c x n_c
  double sample_period_s = 0.0;

  int channels() const { return gamma.rows() > 0 ? static_cast<int>(gamma.rows()) : (taps.empty() ? 0 : static_cast<int>(taps[0].rows())); }
  int order() const { return static_cast<int>(taps.size()); }
  void validate() const;
};

/// Explicit evaluation state: error history ring plus integral accumulator.
/// A single state must not be shared across threads.
struct IfirState {
  std::vector<Eigen::VectorXd> history;  // ring buffer, history[head] = e(t-1)
  Eigen::VectorXd accumulator;
  int head = 0;

  static IfirState initial(const IfirParams& p);
};

/// One controller tick; consumes e(t), returns u(t), advances the state.
Eigen::VectorXd ifir_step(const IfirParams& p, IfirState& state, const Eigen::VectorXd& e);

/// Whole-record evaluation from rest (e(t)=0 for t<0).
Signal eval_ifir(const IfirParams& p, const Signal& error);

/// Grid-sampled positive-realness summary. grid_size/epsilon/rho0/rho echo
/// the synthesis constraints when produced by the solver; the dense check
/// is the a-posteriori verification grid.
struct PassivityCertificate {
  int grid_size = 0;      // constraint grid M used for synthesis (0 = none)
  double epsilon = 0.0;
  double rho0 = 1.0;
  double rho = 0.5;
  double dense_check_min_eig = 0.0;  // min over the dense grid, incl. Gamma part
  bool verdict = false;
  int dense_grid_points = 0;
  double fir_min_eig = 0.0;
  double gamma_min_eig = 0.0;
  double argmin_theta = 0.0;
};

/// Hermitian Popov matrix F(theta) = sum_k (H_k e^{-jk theta} + H_k' e^{jk theta}).
Eigen::MatrixXcd popov_function(const IfirParams& p, double theta);

/// Dense-grid passivity check: min eigenvalue of F over theta in [0,pi]
/// plus the symmetric-part eigenvalue of Gamma.
PassivityCertificate passivity_margin(const IfirParams& p, int grid_points = 10001, double tol = 1e-8);

/// Sampling margin that makes the grid constraints imply dense positivity:
/// ((m-1)/M) * pi * rho0 * (1 - rho^m) / (1 - rho).
double epsilon_bound(int m, int grid_m, double rho0, double rho);

/// State-space realization (delay line plus accumulator). Intended for
/// analysis on small orders; states scale as m * n_c.
DiscreteSs ifir_to_ss(const IfirParams& p);


// Controller files: ts, gamma, taps (row-major) and the certificate block.
std::string ifir_to_json(const IfirParams& p, const PassivityCertificate& cert);
IfirParams ifir_from_json(const std::string& text, PassivityCertificate* cert = nullptr);

}  // namespace pivc
