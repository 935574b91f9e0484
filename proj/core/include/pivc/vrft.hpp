#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "pivc/ifir.hpp"
#include "pivc/lti.hpp"
#include "pivc/signal.hpp"

namespace pivc {

/// How the reference-model inverse is realized on sampled data.
struct InverseConfig {
  double pole_scale = 10.0;
  Discretization method = Discretization::Tustin;
  bool exact_discrete = false;  // offline anti-causal inverse (test oracle / option)
};

/// Virtual error e = Mr^-1(y) - y from measured output alone.
Signal virtual_error(const Signal& y, const ContinuousTf& m_r, const InverseConfig& cfg = {});

/// Exact offline inverse of a discrete SISO/diagonal reference model; the
/// record loses relative-degree samples at the tail.
Signal virtual_error_exact(const Signal& y, const std::vector<RationalTf>& m_r_discrete);

/// Decision-variable descriptor for one regression column.
struct ParamRef {
  enum Kind { Tap, Gamma } kind = Tap;
  int k = 0;  // tap index (Gamma: unused)
  int i = 0;  // matrix row
  int j = 0;  // matrix col (Gamma: i <= j, symmetric pair)
};

struct RegressionOptions {
  bool include_gamma = true;
  bool drop_partial_history = false;  // default: zero-padded history rows kept
};

/// VRFT least-squares data. Rows follow sample-major, channel-minor order;
/// the Gram matrix and right-hand side are assembled by streaming row
/// blocks so long records never materialize the full regressor.
class RegressionData {
 public:
  RegressionData(const Signal& e, const Signal& u, int m, RegressionOptions opts = {});

  int order() const { return m_; }
  int channels() const { return n_c_; }
  double sample_period_s() const { return ts_; }
  Eigen::Index rows() const;
  Eigen::Index cols() const { return static_cast<Eigen::Index>(layout_.size()); }
  const std::vector<ParamRef>& layout() const { return layout_; }
  const Signal& error() const { return e_; }
  const Signal& target() const { return u_; }
  bool include_gamma() const { return opts_.include_gamma; }

  /// Phi' * Phi / N_samples (cached on first use).
  const Eigen::MatrixXd& gram() const;
  /// Phi' * u_stacked / N_samples.
  const Eigen::VectorXd& rhs() const;
  /// Mean squared target, the constant term of the objective.
  double target_mss() const;

  /// Dense regressor block for rows [t0, t1) x channels; row t encodes the
  /// tap history [e(t), ..., e(t-m+1)] and the running integral column(s).
  Eigen::MatrixXd assemble_rows(Eigen::Index t0, Eigen::Index t1) const;
  Eigen::VectorXd stacked_target(Eigen::Index t0, Eigen::Index t1) const;
  Eigen::MatrixXd dense_phi() const;

  /// Objective (1/N) |Phi x - u|^2 (no ridge term).
  double objective(const Eigen::VectorXd& x) const;

  IfirParams unpack(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pack(const IfirParams& p) const;

 private:
  Signal e_, u_;
  Signal integral_;  // Ts * running sum of e, precomputed
  int m_ = 0;
  int n_c_ = 0;
  double ts_ = 0.0;
  RegressionOptions opts_;
  std::vector<ParamRef> layout_;
  Eigen::Index first_row_ = 0;
  mutable std::optional<Eigen::MatrixXd> gram_;
  mutable std::optional<Eigen::VectorXd> rhs_;
};

/// Ridge-regularized least squares over the iFIR parameters.
/// ridge < 0 selects the default 1e-8 * trace(Phi'Phi) / n_params.
IfirParams fit_unconstrained(const RegressionData& reg, double ridge = -1.0, double* residual = nullptr);

/// PID gains with first-order derivative filtering.
struct PidParams {
  Eigen::MatrixXd kp, ki, kd;
  double tau_d = 0.0;
  double sample_period_s = 0.0;

  int channels() const { return static_cast<int>(kp.rows()); }
  void validate() const;
};

/// VRFT fit of u against [e, Ts*cumsum(e), filtered de/dt]. passive=true
/// projects each gain matrix onto the symmetric PSD cone.
/// tau_d < 0 selects the default 2*Ts.
PidParams fit_pid(const Signal& e, const Signal& u, bool passive, double tau_d = -1.0);

struct PidState {
  Eigen::VectorXd accumulator;
  Eigen::VectorXd deriv_state;  // filter state per channel
  static PidState initial(const PidParams& p);
};

Eigen::VectorXd pid_step(const PidParams& p, PidState& state, const Eigen::VectorXd& e);
Signal eval_pid(const PidParams& p, const Signal& error);

/// Filtered derivative s/(tau_d s + 1) discretized at the signal rate.
Signal filtered_derivative(const Signal& e, double tau_d);

std::string pid_to_json(const PidParams& p);
PidParams pid_from_json(const std::string& text);

}  // namespace pivc
