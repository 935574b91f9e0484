#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

#include "pivc/signal.hpp"

namespace pivc {

// Polynomial helpers. Coefficients are stored in descending powers.
std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> poly_add(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> poly_scale(const std::vector<double>& a, double s);
std::vector<double> poly_trim(const std::vector<double>& a);
std::complex<double> poly_eval(const std::vector<double>& a, std::complex<double> x);
std::vector<std::complex<double>> poly_roots(const std::vector<double>& a);

/// One rational transfer-function entry, descending powers of s (or z).
struct RationalTf {
  std::vector<double> num;
  std::vector<double> den;

  bool is_zero() const;
  int relative_degree() const;
};

/// MIMO transfer function as a grid of SISO rational entries (row-major).
/// Continuous unless noted; the same container carries z-domain entries
/// for the exact-inverse path, tagged by sample_period_s > 0.
struct ContinuousTf {
  int rows = 0;
  int cols = 0;
  std::vector<RationalTf> entries;

  static ContinuousTf siso(std::vector<double> num, std::vector<double> den);
  static ContinuousTf diagonal(const RationalTf& entry, int n);

  const RationalTf& entry(int i, int j) const { return entries[static_cast<std::size_t>(i * cols + j)]; }
  RationalTf& entry(int i, int j) { return entries[static_cast<std::size_t>(i * cols + j)]; }
  bool is_diagonal() const;
  void validate() const;  // properness, nonzero leading den coefficient
};

/// Discrete state-space model x+ = Ax + Bu, y = Cx + Du at a fixed rate.
struct DiscreteSs {
  Eigen::MatrixXd a, b, c, d;
  double sample_period_s = 0.0;

  Eigen::Index states() const { return a.rows(); }
  Eigen::Index inputs() const { return b.cols() > 0 ? b.cols() : d.cols(); }
  Eigen::Index outputs() const { return c.rows() > 0 ? c.rows() : d.rows(); }
  void validate() const;
};

enum class Discretization { Zoh, Tustin };

ContinuousTf first_order_ref(double tau_s);
ContinuousTf second_order_ref(double omega_n, double zeta);

/// Block-diagonal controllable-canonical realization of the entry grid.
DiscreteSs discretize(const ContinuousTf& model, double ts, Discretization method = Discretization::Zoh);

Signal simulate_lti(const DiscreteSs& model, const Signal& input,
                    const Eigen::VectorXd& x0 = Eigen::VectorXd());

/// Properized inverse: fast poles appended at pole_scale times the fastest
/// pole of each entry, with unity DC gain of the composition.
ContinuousTf approximate_inverse(const ContinuousTf& model, double pole_scale = 10.0);

Eigen::MatrixXcd freq_response(const ContinuousTf& model, double omega_rad_s);
Eigen::MatrixXcd freq_response(const DiscreteSs& model, double omega_rad_s);

// State-space composition used by loop analysis: series (second after
// first) and unity negative feedback around a strictly proper loop.
DiscreteSs series_ss(const DiscreteSs& first, const DiscreteSs& second);
DiscreteSs feedback_ss(const DiscreteSs& open_loop);

/// SISO transfer function of a discrete realization (Faddeev-LeVerrier).
RationalTf ss_to_tf(const DiscreteSs& model);

// JSON (de)serialization. Entries carry {num, den}; discrete models add ts.
std::string tf_to_json(const ContinuousTf& model);
ContinuousTf tf_from_json(const std::string& text);
std::string ss_to_json(const DiscreteSs& model);
DiscreteSs ss_from_json(const std::string& text);

}  // namespace pivc
