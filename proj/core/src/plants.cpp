#include "pivc/plants.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

namespace pivc {

namespace {

RationalTf rational_sum(const RationalTf& a, const RationalTf& b) {
  return RationalTf{poly_trim(poly_add(poly_mul(a.num, b.den), poly_mul(b.num, a.den))),
                    poly_trim(poly_mul(a.den, b.den))};
}

}  // namespace

ContinuousTf flexible_joint_plant(const FlexibleJointParams& p) {
  if (!(p.motor_inertia > 0.0) || !(p.motor_damping > 0.0))
    throw std::invalid_argument("flexible_joint_plant: motor parameters must be > 0");
  RationalTf acc{{1.0}, {p.motor_inertia, p.motor_damping}};
  for (const auto& m : p.modes) {
    if (!(m.stiffness > 0.0) || !(m.damping > 0.0) || !(m.inertia > 0.0))
      throw std::invalid_argument("flexible_joint_plant: mode parameters must be > 0");
    acc = rational_sum(acc, RationalTf{{1.0, 0.0}, {m.inertia, m.damping, m.stiffness}});
  }
  ContinuousTf tf;
  tf.rows = 1;
  tf.cols = 1;
  tf.entries.push_back(acc);
  tf.validate();
  return tf;
}

namespace {

using Poly = std::vector<double>;
using PolyMatrix = std::vector<std::vector<Poly>>;

Poly poly_det3(const PolyMatrix& m) {
  Poly det{0.0};
  det = poly_add(det, poly_mul(m[0][0], poly_add(poly_mul(m[1][1], m[2][2]),
                                                 poly_scale(poly_mul(m[1][2], m[2][1]), -1.0))));
  det = poly_add(det, poly_scale(poly_mul(m[0][1], poly_add(poly_mul(m[1][0], m[2][2]),
                                                            poly_scale(poly_mul(m[1][2], m[2][0]), -1.0))),
                                 -1.0));
  det = poly_add(det, poly_mul(m[0][2], poly_add(poly_mul(m[1][0], m[2][1]),
                                                 poly_scale(poly_mul(m[1][1], m[2][0]), -1.0))));
  return det;
}

// adj(M)[i][j] = cofactor_ji; entry of the inverse times det.
Poly poly_adj3(const PolyMatrix& m, int i, int j) {
  int r0 = -1, r1 = -1, c0 = -1, c1 = -1;
  for (int r = 0, k = 0; r < 3; ++r)
    if (r != j) (k++ == 0 ? r0 : r1) = r;
  for (int c = 0, k = 0; c < 3; ++c)
    if (c != i) (k++ == 0 ? c0 : c1) = c;
  Poly minor = poly_add(poly_mul(m[r0][c0], m[r1][c1]), poly_scale(poly_mul(m[r0][c1], m[r1][c0]), -1.0));
  return ((i + j) % 2 == 0) ? minor : poly_scale(minor, -1.0);
}

// Strip the common s^k factor that appears when K has zero rows/columns.
void cancel_origin_factors(Poly& num, Poly& den) {
  while (num.size() > 1 && den.size() > 1 && num.back() == 0.0 && den.back() == 0.0) {
    num.pop_back();
    den.pop_back();
  }
}

void require_symmetric(const Eigen::Matrix3d& m, const char* name) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument(std::string("coupled_cartesian_plant: ") + name + " must be symmetric");
}

}  // namespace

ContinuousTf coupled_cartesian_plant(const CoupledCartesianParams& p) {
  require_symmetric(p.inertia, "inertia");
  require_symmetric(p.damping, "damping");
  require_symmetric(p.stiffness, "stiffness");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es_m(p.inertia);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es_d(p.damping);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es_k(p.stiffness);
  if (es_m.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("coupled_cartesian_plant: inertia must be positive definite");
  if (es_d.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("coupled_cartesian_plant: damping must be positive definite");
  if (es_k.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("coupled_cartesian_plant: stiffness must be positive semidefinite");

  // Impedance Z(s) = Ms + D + K/s; velocity map is s * (Ms^2 + Ds + K)^-1.
  PolyMatrix z(3, std::vector<Poly>(3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) z[i][j] = Poly{p.inertia(i, j), p.damping(i, j), p.stiffness(i, j)};
  Poly det = poly_trim(poly_det3(z));

  ContinuousTf tf;
  tf.rows = 3;
  tf.cols = 3;
  tf.entries.resize(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Poly num = poly_trim(poly_mul(poly_adj3(z, i, j), Poly{1.0, 0.0}));
      Poly den = det;
      cancel_origin_factors(num, den);
      if (num.size() == 1 && num[0] == 0.0) den = {1.0};
      tf.entry(i, j) = RationalTf{std::move(num), std::move(den)};
    }
  tf.validate();
  return tf;
}

DiscreteSs random_passive_plant(std::uint64_t seed, int order, int channels, double ts) {
  if (order < 1) throw std::invalid_argument("random_passive_plant: order must be >= 1");
  if (channels < 1) throw std::invalid_argument("random_passive_plant: channels must be >= 1");
  if (!(ts > 0.0)) throw std::invalid_argument("random_passive_plant: ts must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Continuous positive-real sections, Tustin-discretized so positive
  // realness carries over to the discrete supply rate exactly.
  ContinuousTf sections;
  sections.rows = channels;
  sections.cols = channels;
  sections.entries.assign(static_cast<std::size_t>(channels) * channels, RationalTf{{0.0}, {1.0}});

  int remaining = order;
  std::vector<Eigen::VectorXd> dirs;
  std::vector<RationalTf> sec;
  while (remaining > 0) {
    const bool resonant = remaining >= 2 && unit(rng) < 0.6;
    RationalTf s;
    if (resonant) {
      const double w0 = 2.0 + 60.0 * unit(rng);
      const double zeta = 0.15 + 0.6 * unit(rng);
      const double gain = 0.2 + 1.3 * unit(rng);
      s = RationalTf{{gain, 0.0}, {1.0, 2.0 * zeta * w0, w0 * w0}};
      remaining -= 2;
    } else {
      const double j = 0.05 + 0.5 * unit(rng);
      const double b = 0.3 + 1.2 * unit(rng);
      s = RationalTf{{1.0}, {j, b}};
      remaining -= 1;
    }
    Eigen::VectorXd v(channels);
    for (int c = 0; c < channels; ++c) v(c) = 2.0 * unit(rng) - 1.0;
    if (v.norm() < 1e-6) v.setOnes();
    v.normalize();
    dirs.push_back(v);
    sec.push_back(s);
  }

  // Realize each section against its rank-one direction and sum in parallel.
  Eigen::Index total = 0;
  std::vector<DiscreteSs> parts;
  for (std::size_t i = 0; i < sec.size(); ++i) {
    ContinuousTf one;
    one.rows = 1;
    one.cols = 1;
    one.entries.push_back(sec[i]);
    parts.push_back(discretize(one, ts, Discretization::Tustin));
    total += parts.back().states();
  }

  DiscreteSs out;
  out.sample_period_s = ts;
  out.a = Eigen::MatrixXd::Zero(total, total);
  out.b = Eigen::MatrixXd::Zero(total, channels);
  out.c = Eigen::MatrixXd::Zero(channels, total);
  const double feedthrough = 0.1 + 0.4 * unit(rng);
  out.d = feedthrough * Eigen::MatrixXd::Identity(channels, channels);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto n = parts[i].states();
    out.a.block(at, at, n, n) = parts[i].a;
    out.b.block(at, 0, n, channels) = parts[i].b * dirs[i].transpose();
    out.c.block(0, at, channels, n) = dirs[i] * parts[i].c;
    out.d += dirs[i] * parts[i].d * dirs[i].transpose();
    at += n;
  }
  return out;
}

namespace {

PositiveRealReport scan_hermitian_min(const std::function<Eigen::MatrixXcd(double)>& response,
                                      const std::vector<double>& grid, double tol) {
  PositiveRealReport rep;
  rep.min_eig = std::numeric_limits<double>::infinity();
  for (double w : grid) {
    const Eigen::MatrixXcd g = response(w);
    const Eigen::MatrixXcd h = g + g.adjoint();
    double lmin;
    if (h.rows() == 1) {
      lmin = h(0, 0).real();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
      lmin = es.eigenvalues().minCoeff();
    }
    if (lmin < rep.min_eig) {
      rep.min_eig = lmin;
      rep.argmin_omega = w;
    }
  }
  rep.verdict = rep.min_eig >= -tol;
  return rep;
}

}  // namespace

PositiveRealReport is_positive_real(const ContinuousTf& model, int grid_points, double tol) {
  model.validate();
  if (grid_points < 2) throw std::invalid_argument("is_positive_real: grid_points must be >= 2");
  double fastest = 0.0;
  for (const auto& e : model.entries) {
    if (e.is_zero()) continue;
    for (const auto& p : poly_roots(e.den)) {
      if (p.real() > 1e-7) throw std::invalid_argument("is_positive_real: unstable model");
      fastest = std::max(fastest, std::abs(p));
    }
  }
  const double hi = std::max(1.0, fastest) * 1e2;
  const double lo = hi * 1e-8;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(grid_points));
  grid.push_back(0.0);
  const double step = std::log(hi / lo) / static_cast<double>(grid_points - 2);
  for (int i = 0; i < grid_points - 1; ++i) grid.push_back(lo * std::exp(step * i));
  return scan_hermitian_min([&](double w) { return freq_response(model, w); }, grid, tol);
}

PositiveRealReport is_positive_real(const DiscreteSs& model, int grid_points, double tol) {
  model.validate();
  if (grid_points < 2) throw std::invalid_argument("is_positive_real: grid_points must be >= 2");
  if (model.states() > 0) {
    const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(model.a, false).eigenvalues();
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
      if (std::abs(eig(i)) > 1.0 - 1e-9) throw std::invalid_argument("is_positive_real: unstable model");
    }
  }
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    grid.push_back(M_PI * static_cast<double>(i) / static_cast<double>(grid_points - 1));
  // Grid carries theta; reuse the scanner by mapping theta -> omega.
  return scan_hermitian_min(
      [&](double theta) { return freq_response(model, theta / model.sample_period_s); }, grid, tol);
}

FlexibleJointParams long_plate_preset() {
  FlexibleJointParams p;
  p.motor_inertia = 0.02;
  p.motor_damping = 0.1;
  // Modes near 8 and 25 rad/s with ~0.05 damping ratio.
  p.modes.push_back(FlexibleMode{0.05 * 64.0, 2.0 * 0.05 * 8.0 * 0.05, 0.05});
  p.modes.push_back(FlexibleMode{0.02 * 625.0, 2.0 * 0.05 * 25.0 * 0.02, 0.02});
  return p;
}

FlexibleJointParams short_plate_preset() {
  FlexibleJointParams p = long_plate_preset();
  for (auto& m : p.modes) m.stiffness *= 1.75 * 1.75;  // resonances shift up by 1.75x
  return p;
}

CoupledCartesianParams cartesian3_preset() {
  CoupledCartesianParams p;
  p.inertia << 2.0, 0.6, 0.3, 0.6, 1.6, 0.5, 0.3, 0.5, 2.4;
  p.damping << 8.0, 2.0, 1.0, 2.0, 7.0, 1.5, 1.0, 1.5, 9.0;
  p.stiffness.setZero();
  return p;
}

std::vector<double> resonance_frequencies(const ContinuousTf& model) {
  std::vector<double> freqs;
  for (const auto& e : model.entries) {
    if (e.is_zero()) continue;
    for (const auto& p : poly_roots(e.den)) {
      if (p.imag() > 1e-9) freqs.push_back(std::abs(p));
    }
  }
  std::sort(freqs.begin(), freqs.end());
  return freqs;
}

}  // namespace pivc
