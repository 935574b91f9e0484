#include "pivc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pivc {

namespace {

// Row-major vec index of an (i,j) entry in an nc x nc matrix.
inline Eigen::Index vidx(int i, int j, int nc) { return static_cast<Eigen::Index>(i) * nc + j; }

struct GammaCol {
  Eigen::Index col;
  int i, j;
};

// Projection of a Hermitian 2x2 matrix (diag b1,b2; off-diagonal br+j*bi)
// onto the PSD cone in the anisotropic metric wr*|re|^2 + wi*|im|^2.
// Writes {p, q, cr, ci}. Solved by KKT candidates plus a 1-D dual bisection.
void weighted_psd_project_2x2(double b1, double b2, double br, double bi, double wr, double wi,
                              double out[4]) {
  const auto objective = [&](double p, double q, double cr, double ci) {
    return wr * ((p - b1) * (p - b1) + (q - b2) * (q - b2) + 2.0 * (cr - br) * (cr - br)) +
           2.0 * wi * (ci - bi) * (ci - bi);
  };
  double best[4] = {0.0, 0.0, 0.0, 0.0};
  double best_f = objective(0.0, 0.0, 0.0, 0.0);

  const auto consider = [&](double p, double q, double cr, double ci) {
    if (p < -1e-13 || q < -1e-13) return;
    p = std::max(p, 0.0);
    q = std::max(q, 0.0);
    if (p * q - cr * cr - ci * ci < -1e-11 * std::max(1.0, p * q)) return;
    const double f = objective(p, q, cr, ci);
    if (f < best_f) {
      best_f = f;
      best[0] = p;
      best[1] = q;
      best[2] = cr;
      best[3] = ci;
    }
  };

  consider(b1, b2, br, bi);                       // already PSD
  consider(std::max(b1, 0.0), 0.0, 0.0, 0.0);     // rank-one corners
  consider(0.0, std::max(b2, 0.0), 0.0, 0.0);

  // Interior of the active manifold pq = cr^2 + ci^2 via the dual variable.
  const auto eval_phi = [&](double lam, double kkt[4]) {
    const double den = 4.0 * wr * wr - lam * lam;
    kkt[0] = 2.0 * wr * (2.0 * wr * b1 + lam * b2) / den;
    kkt[1] = 2.0 * wr * (2.0 * wr * b2 + lam * b1) / den;
    kkt[2] = 2.0 * wr * br / (2.0 * wr + lam);
    kkt[3] = 2.0 * wi * bi / (2.0 * wi + lam);
    return kkt[0] * kkt[1] - kkt[2] * kkt[2] - kkt[3] * kkt[3];
  };
  double lo = 0.0, hi = 2.0 * wr * (1.0 - 1e-12);
  double kkt[4];
  if (eval_phi(lo, kkt) < 0.0 && eval_phi(hi, kkt) > 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (eval_phi(mid, kkt) >= 0.0)
        hi = mid;
      else
        lo = mid;
    }
    eval_phi(hi, kkt);
    consider(kkt[0], kkt[1], kkt[2], kkt[3]);
  }
  out[0] = best[0];
  out[1] = best[1];
  out[2] = best[2];
  out[3] = best[3];
}

// Coordinate bookkeeping plus the sampled Popov grid machinery shared by
// the splitting solver, the polish pass, KKT recovery and the oracle.
struct Workspace {
  int m = 0;
  int nc = 0;
  Eigen::Index n2 = 0;
  Eigen::Index n_taps = 0;
  Eigen::Index n = 0;
  bool use_im = false;
  std::vector<GammaCol> gamma_cols;

  int grid_m = 0;
  Eigen::MatrixXd kc, ks;  // (M+1) x m
  Eigen::VectorXd ar, ai;  // 4*sum cos^2, 4*sum sin^2 per grid point
  std::vector<Eigen::Index> transpose_perm;

  double eps = 0.0;
  double ridge = 0.0;
  EnvelopeMode envelope = EnvelopeMode::Elementwise;
  std::vector<double> caps;  // per-tap bound (entry bound for elementwise)

  explicit Workspace(const SynthesisProblem& p) {
    const RegressionData& reg = p.regression;
    m = reg.order();
    nc = reg.channels();
    n2 = static_cast<Eigen::Index>(nc) * nc;
    n_taps = static_cast<Eigen::Index>(m) * n2;
    n = reg.cols();
    use_im = nc > 1;
    for (Eigen::Index c = 0; c < reg.cols(); ++c) {
      const ParamRef& ref = reg.layout()[static_cast<std::size_t>(c)];
      if (ref.kind == ParamRef::Gamma) gamma_cols.push_back(GammaCol{c, ref.i, ref.j});
    }

    grid_m = p.settings.grid_m;
    if (grid_m < 2) throw std::invalid_argument("synthesize_passive: grid_m must be >= 2");
    kc.resize(grid_m + 1, m);
    ks.resize(grid_m + 1, m);
    for (int q = 0; q <= grid_m; ++q) {
      const double theta = M_PI * static_cast<double>(q) / static_cast<double>(grid_m);
      for (int k = 0; k < m; ++k) {
        kc(q, k) = std::cos(theta * k);
        ks(q, k) = std::sin(theta * k);
      }
    }
    ar = 4.0 * kc.rowwise().squaredNorm();
    ai = 4.0 * ks.rowwise().squaredNorm();

    transpose_perm.resize(static_cast<std::size_t>(n2));
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) transpose_perm[static_cast<std::size_t>(vidx(i, j, nc))] = vidx(j, i, nc);

    eps = p.resolved_epsilon();
    ridge = p.resolved_ridge();
    envelope = p.settings.envelope;
    caps.resize(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) caps[static_cast<std::size_t>(k)] = p.envelope_cap(k);
  }

  // Tap stack: m x n2, row k = row-major vec of H_k.
  Eigen::MatrixXd tap_stack(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd hs(m, n2);
    for (int k = 0; k < m; ++k) hs.row(k) = x.segment(static_cast<Eigen::Index>(k) * n2, n2).transpose();
    return hs;
  }
  void set_taps(Eigen::VectorXd& x, const Eigen::MatrixXd& hs) const {
    for (int k = 0; k < m; ++k) x.segment(static_cast<Eigen::Index>(k) * n2, n2) = hs.row(k).transpose();
  }

  Eigen::MatrixXd apply_transpose_cols(const Eigen::MatrixXd& s) const {
    Eigen::MatrixXd out(s.rows(), s.cols());
    for (Eigen::Index c = 0; c < s.cols(); ++c) out.col(c) = s.col(transpose_perm[static_cast<std::size_t>(c)]);
    return out;
  }

  // F stacks over the whole grid from the tap stack.
  void f_stacks(const Eigen::MatrixXd& hs, Eigen::MatrixXd& fre, Eigen::MatrixXd& fim) const {
    const Eigen::MatrixXd ht = apply_transpose_cols(hs);
    fre.noalias() = kc * (hs + ht);
    if (use_im)
      fim.noalias() = ks * (ht - hs);
    else
      fim.resize(0, 0);
  }

  Eigen::MatrixXcd hermitian_at(const Eigen::MatrixXd& fre, const Eigen::MatrixXd& fim, int q) const {
    Eigen::MatrixXcd f(nc, nc);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j)
        f(i, j) = std::complex<double>(fre(q, vidx(i, j, nc)), use_im ? fim(q, vidx(i, j, nc)) : 0.0);
    f = 0.5 * (f + f.adjoint()).eval();
    return f;
  }

  double min_eig(const Eigen::MatrixXcd& f, Eigen::VectorXcd* vec = nullptr) const {
    if (nc == 1) {
      if (vec) {
        vec->resize(1);
        (*vec)(0) = 1.0;
      }
      return f(0, 0).real();
    }
    if (nc == 2) {
      // Closed form for the Hermitian 2x2 case (hot path).
      const double a = f(0, 0).real();
      const double d = f(1, 1).real();
      const std::complex<double> b = f(0, 1);
      const double gap = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + std::norm(b)));
      const double lmin = 0.5 * (a + d) - gap;
      if (vec) {
        vec->resize(2);
        if (std::abs(a - lmin) >= std::abs(d - lmin)) {
          (*vec)(0) = -b;
          (*vec)(1) = std::complex<double>(a - lmin, 0.0);
        } else {
          (*vec)(0) = std::complex<double>(d - lmin, 0.0);
          (*vec)(1) = -std::conj(b);
        }
        const double nv = vec->norm();
        if (nv < 1e-300) {
          (*vec)(0) = 1.0;
          (*vec)(1) = 0.0;
        } else {
          *vec /= nv;
        }
      }
      return lmin;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f, vec ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    Eigen::Index arg = 0;
    es.eigenvalues().minCoeff(&arg);
    if (vec) *vec = es.eigenvectors().col(arg);
    return es.eigenvalues().minCoeff();
  }

  Eigen::MatrixXd gamma_matrix(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nc, nc);
    for (const auto& gc : gamma_cols) {
      g(gc.i, gc.j) = x(gc.col);
      g(gc.j, gc.i) = x(gc.col);
    }
    return g;
  }
  void set_gamma(Eigen::VectorXd& x, const Eigen::MatrixXd& g) const {
    for (const auto& gc : gamma_cols) x(gc.col) = 0.5 * (g(gc.i, gc.j) + g(gc.j, gc.i));
  }

  double env_violation(const Eigen::MatrixXd& hs) const {
    double worst = 0.0;
    for (int k = 0; k < m; ++k) {
      const double cap = caps[static_cast<std::size_t>(k)];
      if (envelope == EnvelopeMode::Elementwise) {
        worst = std::max(worst, hs.row(k).cwiseAbs().maxCoeff() - cap);
      } else {
        Eigen::MatrixXd h(nc, nc);
        for (int i = 0; i < nc; ++i)
          for (int j = 0; j < nc; ++j) h(i, j) = hs(k, vidx(i, j, nc));
        const double sv = nc == 1 ? std::abs(h(0, 0)) : h.jacobiSvd().singularValues()(0);
        worst = std::max(worst, sv - cap);
      }
    }
    return worst;
  }

  void project_envelope(Eigen::MatrixXd& hs) const {
    for (int k = 0; k < m; ++k) {
      const double cap = caps[static_cast<std::size_t>(k)];
      if (envelope == EnvelopeMode::Elementwise) {
        hs.row(k) = hs.row(k).cwiseMax(-cap).cwiseMin(cap);
      } else {
        Eigen::MatrixXd h(nc, nc);
        for (int i = 0; i < nc; ++i)
          for (int j = 0; j < nc; ++j) h(i, j) = hs(k, vidx(i, j, nc));
        if (nc == 1) {
          h(0, 0) = std::clamp(h(0, 0), -cap, cap);
        } else {
          Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
          if (svd.singularValues()(0) > cap) {
            const Eigen::VectorXd sv = svd.singularValues().cwiseMin(cap);
            h = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
          }
        }
        for (int i = 0; i < nc; ++i)
          for (int j = 0; j < nc; ++j) hs(k, vidx(i, j, nc)) = h(i, j);
      }
    }
  }

  // Gradient of lambda_min(F_q) wrt the tap coordinates via its eigenvector.
  Eigen::VectorXd min_eig_gradient(int q, const Eigen::VectorXcd& v) const {
    const Eigen::MatrixXcd outer = v * v.adjoint();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_taps);
    for (int k = 0; k < m; ++k) {
      const double c = kc(q, k);
      const double s = ks(q, k);
      for (int i = 0; i < nc; ++i)
        for (int j = 0; j < nc; ++j) {
          double g = 2.0 * c * outer(i, j).real();
          if (use_im) g -= 2.0 * s * outer(i, j).imag();
          grad(static_cast<Eigen::Index>(k) * n2 + vidx(i, j, nc)) = g;
        }
    }
    return grad;
  }

  // Max violation over all constraint families at x.
  double violation(const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd hs = tap_stack(x);
    Eigen::MatrixXd fre, fim;
    f_stacks(hs, fre, fim);
    double worst = env_violation(hs);
    for (int q = 0; q <= grid_m; ++q)
      worst = std::max(worst, eps - min_eig(hermitian_at(fre, fim, q)));
    if (!gamma_cols.empty()) {
      const Eigen::MatrixXd g = gamma_matrix(x);
      const double lmin = nc == 1 ? g(0, 0) : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
      worst = std::max(worst, -lmin);
    }
    return std::max(worst, 0.0);
  }

  // Lazy (M+1)x(M+1) correlation caches used by the incremental polish.
  mutable Eigen::MatrixXd cc_cache, ss_cache;
  const Eigen::MatrixXd& cc_grid() const {
    if (cc_cache.size() == 0) cc_cache = kc * kc.transpose();
    return cc_cache;
  }
  const Eigen::MatrixXd& ss_grid() const {
    if (ss_cache.size() == 0) ss_cache = ks * ks.transpose();
    return ss_cache;
  }

  // Cyclic feasibility pass: supporting-halfspace corrections for violated
  // Popov points (exact projections in the SISO case, Gauss-Seidel with
  // rank-one grid updates), then an exact envelope clip; the exit check is
  // recomputed from scratch so the returned point is envelope-exact.
  double polish(Eigen::VectorXd& x, double tol, int max_sweeps) const {
    if (!gamma_cols.empty()) set_gamma(x, project_psd(gamma_matrix(x), 0.0));
    Eigen::MatrixXd hs = tap_stack(x);
    project_envelope(hs);
    double worst = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      Eigen::MatrixXd fre, fim;
      f_stacks(hs, fre, fim);
      bool corrected = false;
      for (int q = 0; q <= grid_m; ++q) {
        Eigen::VectorXcd v;
        const double lmin = min_eig(hermitian_at(fre, fim, q), &v);
        const double gap = eps - lmin;
        if (gap <= 0.25 * tol) continue;
        corrected = true;
        const Eigen::MatrixXcd outer = v * v.adjoint();
        Eigen::VectorXd vec_re(n2), vec_im(n2);
        double re2 = 0.0, im2 = 0.0;
        for (int i = 0; i < nc; ++i)
          for (int j = 0; j < nc; ++j) {
            vec_re(vidx(i, j, nc)) = outer(i, j).real();
            vec_im(vidx(i, j, nc)) = outer(i, j).imag();
            re2 += outer(i, j).real() * outer(i, j).real();
            im2 += outer(i, j).imag() * outer(i, j).imag();
          }
        const double norm2 = ar(q) * re2 + (use_im ? ai(q) * im2 : 0.0);
        if (norm2 <= 0.0) continue;
        const double step = gap / norm2;
        for (int k = 0; k < m; ++k) {
          const double c = kc(q, k);
          const double s = ks(q, k);
          for (Eigen::Index e = 0; e < n2; ++e) {
            double g = 2.0 * c * vec_re(e);
            if (use_im) g -= 2.0 * s * vec_im(e);
            hs(k, e) += step * g;
          }
        }
        // Rank-one refresh of the sampled Popov values.
        fre.noalias() += (4.0 * step) * (cc_grid().col(q) * vec_re.transpose());
        if (use_im) fim.noalias() += (4.0 * step) * (ss_grid().col(q) * vec_im.transpose());
      }
      project_envelope(hs);
      // Fresh exit check after the exact envelope clip.
      f_stacks(hs, fre, fim);
      worst = 0.0;
      for (int q = 0; q <= grid_m; ++q)
        worst = std::max(worst, eps - min_eig(hermitian_at(fre, fim, q)));
      if (worst <= tol) break;
      if (!corrected && worst > tol) {
        // Envelope clip keeps reintroducing the gap; tighten the inner
        // margin by overshooting the Popov floor slightly.
        continue;
      }
    }
    set_taps(x, hs);
    return worst;
  }

  // Hermitian F value at one grid point, straight from the tap stack.
  Eigen::MatrixXcd popov_at(const Eigen::MatrixXd& hs, int q) const {
    Eigen::MatrixXcd f(nc, nc);
    for (int r = 0; r < nc; ++r)
      for (int c = 0; c < nc; ++c) {
        double re = 0.0, im = 0.0;
        for (int k = 0; k < m; ++k) {
          re += kc(q, k) * (hs(k, vidx(r, c, nc)) + hs(k, vidx(c, r, nc)));
          if (use_im) im += ks(q, k) * (hs(k, vidx(c, r, nc)) - hs(k, vidx(r, c, nc)));
        }
        f(r, c) = std::complex<double>(re, im);
      }
    return f;
  }

  // Dykstra projection onto the constraint intersection: exact box/PSD
  // projections plus Popov halfspace steps (exact in the SISO case,
  // supporting hyperplanes otherwise). Used by the slow oracle.
  void project_dykstra(Eigen::VectorXd& x, double tol, int max_cycles) const {
    const int nsets = grid_m + 3;
    Eigen::MatrixXd hs = tap_stack(x);
    Eigen::MatrixXd gam = gamma_cols.empty() ? Eigen::MatrixXd() : gamma_matrix(x);
    // Per-set correction memories, tap part and gamma part.
    std::vector<Eigen::MatrixXd> mem_h(static_cast<std::size_t>(nsets),
                                       Eigen::MatrixXd::Zero(m, n2));
    Eigen::MatrixXd mem_g = gam;
    if (mem_g.size() > 0) mem_g.setZero();
    Eigen::MatrixXd prev_h = hs;
    Eigen::VectorXcd v;
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
      for (int i = 0; i < nsets; ++i) {
        if (i <= grid_m) {
          Eigen::MatrixXd& mem = mem_h[static_cast<std::size_t>(i)];
          hs += mem;
          const Eigen::MatrixXcd f0 = popov_at(hs, i);
          const double lmin = min_eig(f0, &v);
          if (lmin < eps && nc == 1) {
            // Exact halfspace projection: delta mapped back through A'.
            const double d_re = (eps - f0(0, 0).real()) / ar(i);
            for (int k = 0; k < m; ++k) {
              const double g = 2.0 * kc(i, k) * d_re;
              hs(k, 0) += g;
              mem(k, 0) = -g;
            }
            continue;
          }
          if (lmin < eps && nc == 2) {
            // Exact Euclidean preimage projection: project F0 onto the
            // shifted cone in the (AA')^-1 metric, then map back.
            const double wr = 1.0 / ar(i);
            const double wi = ai(i) > 1e-300 ? 1.0 / ai(i) : 1.0;
            double sol[4];
            weighted_psd_project_2x2(f0(0, 0).real() - eps, f0(1, 1).real() - eps, f0(0, 1).real(),
                                     f0(0, 1).imag(), wr, wi, sol);
            const double d11 = (sol[0] + eps - f0(0, 0).real()) / ar(i);
            const double d22 = (sol[1] + eps - f0(1, 1).real()) / ar(i);
            const double dre = (sol[2] - f0(0, 1).real()) / ar(i);
            const double dim = ai(i) > 1e-300 ? (sol[3] - f0(0, 1).imag()) / ai(i) : 0.0;
            for (int k = 0; k < m; ++k) {
              const double c2 = 2.0 * kc(i, k);
              const double s2 = 2.0 * ks(i, k);
              // A' on (Dre sym, Dim antisym): tap += 2c*Dre - 2s*Dim.
              const double g11 = c2 * d11;
              const double g22 = c2 * d22;
              const double g12 = c2 * dre - s2 * dim;
              const double g21 = c2 * dre + s2 * dim;
              hs(k, 0) += g11;
              hs(k, 1) += g12;
              hs(k, 2) += g21;
              hs(k, 3) += g22;
              mem(k, 0) = -g11;
              mem(k, 1) = -g12;
              mem(k, 2) = -g21;
              mem(k, 3) = -g22;
            }
            continue;
          }
          if (lmin < eps) {
            // Supporting-hyperplane fallback for wider channel counts.
            double re2 = 0.0, im2 = 0.0;
            for (int r = 0; r < nc; ++r)
              for (int c = 0; c < nc; ++c) {
                const std::complex<double> o = v(r) * std::conj(v(c));
                re2 += o.real() * o.real();
                im2 += o.imag() * o.imag();
              }
            const double norm2 = ar(i) * re2 + (use_im ? ai(i) * im2 : 0.0);
            if (norm2 > 0.0) {
              const double step = (eps - lmin) / norm2;
              for (int k = 0; k < m; ++k)
                for (int r = 0; r < nc; ++r)
                  for (int c = 0; c < nc; ++c) {
                    const std::complex<double> o = v(r) * std::conj(v(c));
                    double g = 2.0 * kc(i, k) * o.real();
                    if (use_im) g -= 2.0 * ks(i, k) * o.imag();
                    hs(k, vidx(r, c, nc)) += step * g;
                    mem(k, vidx(r, c, nc)) = -step * g;
                  }
              continue;  // mem holds (pre - post); hs is post
            }
          }
          mem.setZero();
        } else if (i == grid_m + 1) {
          hs += mem_h[static_cast<std::size_t>(i)];
          const Eigen::MatrixXd pre = hs;
          project_envelope(hs);
          mem_h[static_cast<std::size_t>(i)] = pre - hs;
        } else if (gam.size() > 0) {
          gam += mem_g;
          const Eigen::MatrixXd pre = gam;
          gam = project_psd(gam, 0.0);
          mem_g = pre - gam;
        }
      }
      const double moved = (hs - prev_h).norm();
      prev_h = hs;
      if (moved <= 1e-14 * (1.0 + hs.norm())) {
        double worst = 0.0;
        for (int q = 0; q <= grid_m; ++q) worst = std::max(worst, eps - min_eig(popov_at(hs, q)));
        if (std::max(worst, env_violation(hs)) <= tol) break;
      }
    }
    set_taps(x, hs);
    if (gam.size() > 0) set_gamma(x, gam);
  }
};

}  // namespace

double SynthesisProblem::resolved_epsilon() const {
  if (settings.epsilon >= 0.0) return settings.epsilon;
  return epsilon_bound(regression.order(), settings.grid_m, settings.rho0, settings.rho);
}

double SynthesisProblem::resolved_ridge() const {
  if (settings.ridge >= 0.0) return settings.ridge;
  return 1e-8 * regression.gram().trace() / static_cast<double>(regression.cols());
}

double SynthesisProblem::envelope_cap(int k) const {
  const double base = settings.rho0 * std::pow(settings.rho, k);
  return settings.envelope == EnvelopeMode::Elementwise
             ? base / static_cast<double>(regression.channels())
             : base;
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& a, double floor_value) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  if (sym.rows() == 1) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = std::max(sym(0, 0), floor_value);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor_value);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double constraint_violation(const SynthesisProblem& problem, const IfirParams& params) {
  const Workspace w(problem);
  return w.violation(problem.regression.pack(params));
}

SynthesisReport synthesize_passive(const SynthesisProblem& problem) {
  const auto t_start = std::chrono::steady_clock::now();
  const Workspace w(problem);
  const RegressionData& reg = problem.regression;
  const SolverSettings& st = problem.settings;

  // Cheap feasibility probe: the best achievable min eigenvalue of F with
  // only H_0 populated is 2*cap_0 (diagonal at the entry/spectral cap).
  const double cap0 = w.caps.empty() ? 0.0 : w.caps[0];
  if (w.eps > 2.0 * cap0 + 1e-15)
    throw std::invalid_argument("synthesize_passive: epsilon exceeds the envelope budget (infeasible)");

  const Eigen::MatrixXd& gram = reg.gram();
  const Eigen::VectorXd& rhs0 = reg.rhs();
  const Eigen::Index n = w.n;

  // Objective Hessian 2(G + ridge I).
  Eigen::MatrixXd hess_obj = 2.0 * gram;
  hess_obj.diagonal().array() += 2.0 * w.ridge;

  // Structural penalty matrix: Popov normal blocks + envelope lift on the
  // taps, Frobenius-weighted identity on the packed gamma block.
  Eigen::MatrixXd s_struct = Eigen::MatrixXd::Zero(n, n);
  {
    const Eigen::MatrixXd cc = w.kc.transpose() * w.kc;  // m x m
    const Eigen::MatrixXd ssum = w.ks.transpose() * w.ks;
    for (int k = 0; k < w.m; ++k)
      for (int kp = 0; kp < w.m; ++kp) {
        const double a = 2.0 * (cc(k, kp) + ssum(k, kp));
        const double b = 2.0 * (cc(k, kp) - ssum(k, kp));
        for (int i = 0; i < w.nc; ++i)
          for (int j = 0; j < w.nc; ++j) {
            const Eigen::Index row = static_cast<Eigen::Index>(k) * w.n2 + vidx(i, j, w.nc);
            s_struct(row, static_cast<Eigen::Index>(kp) * w.n2 + vidx(i, j, w.nc)) += a;
            s_struct(row, static_cast<Eigen::Index>(kp) * w.n2 + vidx(j, i, w.nc)) += b;
          }
      }
    for (Eigen::Index i = 0; i < w.n_taps; ++i) s_struct(i, i) += 1.0;  // envelope lift
    for (const auto& gc : w.gamma_cols) s_struct(gc.col, gc.col) += gc.i == gc.j ? 1.0 : 2.0;
  }

  // Warm start at the ridge-regularized unconstrained solution.
  Eigen::VectorXd x;
  {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += std::max(w.ridge, 1e-14 * std::max(gram.trace(), 1.0));
    x = Eigen::LDLT<Eigen::MatrixXd>(a).solve(rhs0);
  }
  const double unconstrained_obj = reg.objective(x) + w.ridge * x.squaredNorm();

  double rho = st.admm_penalty > 0.0
                   ? st.admm_penalty
                   : std::max(1e-10, hess_obj.trace() / static_cast<double>(n));
  Eigen::LLT<Eigen::MatrixXd> llt;
  const auto refactor = [&]() {
    Eigen::MatrixXd p = hess_obj + rho * s_struct;
    llt.compute(p);
    if (llt.info() != Eigen::Success) throw std::runtime_error("synthesize_passive: factorization failed");
  };
  refactor();

  // Lifted variables and scaled duals.
  Eigen::MatrixXd hs = w.tap_stack(x);
  Eigen::MatrixXd fre, fim;
  w.f_stacks(hs, fre, fim);
  Eigen::MatrixXd zre = fre, zim = fim;
  for (int q = 0; q <= w.grid_m; ++q) {
    Eigen::MatrixXcd f = w.hermitian_at(fre, fim, q);
    if (w.nc == 1) {
      zre(q, 0) = std::max(f(0, 0).real(), w.eps);
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f);
      const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(w.eps);
      const Eigen::MatrixXcd zf = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
      for (int i = 0; i < w.nc; ++i)
        for (int j = 0; j < w.nc; ++j) {
          zre(q, vidx(i, j, w.nc)) = zf(i, j).real();
          zim(q, vidx(i, j, w.nc)) = zf(i, j).imag();
        }
    }
  }
  Eigen::MatrixXd ure = Eigen::MatrixXd::Zero(w.grid_m + 1, w.n2);
  Eigen::MatrixXd uim = w.use_im ? Eigen::MatrixXd::Zero(w.grid_m + 1, w.n2) : Eigen::MatrixXd();
  Eigen::MatrixXd y = hs;
  w.project_envelope(y);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(w.m, w.n2);
  Eigen::MatrixXd wg = w.gamma_cols.empty() ? Eigen::MatrixXd() : project_psd(w.gamma_matrix(x), 0.0);
  Eigen::MatrixXd tg = w.gamma_cols.empty() ? Eigen::MatrixXd() : Eigen::MatrixXd::Zero(w.nc, w.nc);

  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  double last_check_obj = std::numeric_limits<double>::infinity();
  int iters_done = 0;
  Eigen::MatrixXd prev_zre, prev_y;
  double prev_consensus_change = 0.0;

  for (int it = 0; it < st.max_iters; ++it) {
    iters_done = it + 1;
    // x-update.
    Eigen::VectorXd rhs = 2.0 * rhs0;
    {
      Eigen::MatrixXd adj = 2.0 * (w.kc.transpose() * (zre - ure));
      if (w.use_im) adj -= 2.0 * (w.ks.transpose() * (zim - uim));
      adj += y - v;
      Eigen::VectorXd taps_rhs(w.n_taps);
      for (int k = 0; k < w.m; ++k) taps_rhs.segment(static_cast<Eigen::Index>(k) * w.n2, w.n2) = adj.row(k).transpose();
      rhs.head(w.n_taps) += rho * taps_rhs;
      if (!w.gamma_cols.empty()) {
        const Eigen::MatrixXd gsrc = wg - tg;
        for (const auto& gc : w.gamma_cols)
          rhs(gc.col) += rho * (gc.i == gc.j ? gsrc(gc.i, gc.i) : 2.0 * gsrc(gc.i, gc.j));
      }
    }
    x = llt.solve(rhs);
    hs = w.tap_stack(x);
    w.f_stacks(hs, fre, fim);

    // Z-update (Popov cone) and scaled dual.
    for (int q = 0; q <= w.grid_m; ++q) {
      if (w.nc == 1) {
        const double t = fre(q, 0) + ure(q, 0);
        zre(q, 0) = std::max(t, w.eps);
        ure(q, 0) = t - zre(q, 0);
      } else {
        Eigen::MatrixXcd t(w.nc, w.nc);
        for (int i = 0; i < w.nc; ++i)
          for (int j = 0; j < w.nc; ++j)
            t(i, j) = std::complex<double>(fre(q, vidx(i, j, w.nc)) + ure(q, vidx(i, j, w.nc)),
                                           fim(q, vidx(i, j, w.nc)) + uim(q, vidx(i, j, w.nc)));
        t = 0.5 * (t + t.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(t);
        const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(w.eps);
        const Eigen::MatrixXcd zf = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
        for (int i = 0; i < w.nc; ++i)
          for (int j = 0; j < w.nc; ++j) {
            const Eigen::Index c = vidx(i, j, w.nc);
            const double tre = t(i, j).real(), tim = t(i, j).imag();
            zre(q, c) = zf(i, j).real();
            zim(q, c) = zf(i, j).imag();
            ure(q, c) = tre - zre(q, c);
            uim(q, c) = tim - zim(q, c);
          }
      }
    }

    // Y-update (envelope) and dual.
    {
      const Eigen::MatrixXd t = hs + v;
      y = t;
      w.project_envelope(y);
      v = t - y;
    }

    // Gamma update and dual.
    if (!w.gamma_cols.empty()) {
      const Eigen::MatrixXd t = w.gamma_matrix(x) + tg;
      wg = project_psd(t, 0.0);
      tg = t - wg;
    }

    if ((it + 1) % st.check_every == 0 || it + 1 == st.max_iters) {
      const double viol = w.violation(x);
      const double obj = reg.objective(x) + w.ridge * x.squaredNorm();
      const bool obj_stable = std::abs(obj - last_check_obj) <= st.tol_rel_obj * std::max(1.0, std::abs(obj));
      last_check_obj = obj;
      // Candidates are always run through the feasibility polish so the
      // recorded iterates carry an exact envelope/PSD projection.
      const bool near_feasible = viol <= 100.0 * st.tol_feas;
      if (near_feasible && (obj_stable || (it + 1) % (4 * st.check_every) == 0)) {
        Eigen::VectorXd cand = x;
        w.polish(cand, 0.25 * st.tol_feas, 400);
        if (w.violation(cand) <= st.tol_feas) {
          const double cobj = reg.objective(cand) + w.ridge * cand.squaredNorm();
          if (cobj < best_obj) {
            best_obj = cobj;
            best_x = cand;
          }
          if (obj_stable) break;
        }
      }
      // Residual balancing.
      if ((it + 1) % (8 * st.check_every) == 0) {
        double primal = (fre - zre).squaredNorm() + (hs - y).squaredNorm();
        if (w.use_im) primal += (fim - zim).squaredNorm();
        if (!w.gamma_cols.empty()) primal += (w.gamma_matrix(x) - wg).squaredNorm();
        primal = std::sqrt(primal);
        double consensus_change = 0.0;
        if (prev_zre.size() > 0) consensus_change = std::sqrt((zre - prev_zre).squaredNorm() + (y - prev_y).squaredNorm());
        prev_zre = zre;
        prev_y = y;
        const double dual = rho * std::max(consensus_change, prev_consensus_change);
        prev_consensus_change = consensus_change;
        if (dual > 0.0) {
          if (primal > 10.0 * dual) {
            rho *= 1.8;
            refactor();
          } else if (dual > 10.0 * primal) {
            rho /= 1.8;
            refactor();
          }
        }
      }
    }
  }

  if (best_x.size() == 0) {
    Eigen::VectorXd cand = x;
    w.polish(cand, 0.25 * st.tol_feas, 2000);
    if (w.violation(cand) > st.tol_feas) {
      // Last resort: blend toward an interior feasible point (identity H_0
      // at the midpoint between the Popov floor and the envelope cap).
      Eigen::VectorXd center = Eigen::VectorXd::Zero(w.n);
      for (int i = 0; i < w.nc; ++i) center(vidx(i, i, w.nc)) = 0.5 * (0.5 * w.eps + cap0);
      double lo = 0.0, hi = 1.0;
      for (int b = 0; b < 60; ++b) {
        const double mid = 0.5 * (lo + hi);
        Eigen::VectorXd probe = (1.0 - mid) * cand + mid * center;
        if (w.violation(probe) <= 0.5 * st.tol_feas)
          hi = mid;
        else
          lo = mid;
      }
      cand = ((1.0 - hi) * cand + hi * center).eval();
      if (w.violation(cand) > st.tol_feas)
        throw std::runtime_error("synthesize_passive: iteration limit reached without a feasible iterate");
    }
    best_x = cand;
    best_obj = reg.objective(cand) + w.ridge * cand.squaredNorm();
  }

  SynthesisReport rep;
  rep.params = reg.unpack(best_x);
  rep.objective_value = best_obj;
  rep.unconstrained_objective = unconstrained_obj;
  rep.max_constraint_violation = w.violation(best_x);
  rep.iterations = iters_done;
  rep.kkt = kkt_residual(problem, rep.params);
  rep.certificate = passivity_margin(rep.params, st.dense_grid_points);
  rep.certificate.grid_size = w.grid_m;
  rep.certificate.epsilon = w.eps;
  rep.certificate.rho0 = st.rho0;
  rep.certificate.rho = st.rho;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

KktResidual kkt_residual(const SynthesisProblem& problem, const IfirParams& params) {
  const Workspace w(problem);
  const RegressionData& reg = problem.regression;
  const Eigen::VectorXd x = reg.pack(params);
  const double atol = 1e-6;

  // Objective gradient (including the ridge actually optimized).
  Eigen::VectorXd grad = 2.0 * (reg.gram() * x - reg.rhs()) + 2.0 * w.ridge * x;

  struct Constraint {
    double value;  // c(x) <= 0 form
    Eigen::VectorXd gradient;
  };
  std::vector<Constraint> active;
  double worst = 0.0;

  const Eigen::MatrixXd hs = w.tap_stack(x);
  Eigen::MatrixXd fre, fim;
  w.f_stacks(hs, fre, fim);
  for (int q = 0; q <= w.grid_m; ++q) {
    Eigen::VectorXcd v;
    const double lmin = w.min_eig(w.hermitian_at(fre, fim, q), &v);
    const double c = w.eps - lmin;
    worst = std::max(worst, c);
    if (c >= -atol) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(w.n);
      g.head(w.n_taps) = -w.min_eig_gradient(q, v);
      active.push_back(Constraint{c, std::move(g)});
    }
  }
  for (int k = 0; k < w.m; ++k) {
    const double cap = w.caps[static_cast<std::size_t>(k)];
    if (w.envelope == EnvelopeMode::Elementwise) {
      for (Eigen::Index c = 0; c < w.n2; ++c) {
        const Eigen::Index col = static_cast<Eigen::Index>(k) * w.n2 + c;
        const double val = std::abs(x(col)) - cap;
        worst = std::max(worst, val);
        if (val >= -atol) {
          Eigen::VectorXd g = Eigen::VectorXd::Zero(w.n);
          g(col) = x(col) >= 0.0 ? 1.0 : -1.0;
          active.push_back(Constraint{val, std::move(g)});
        }
      }
    } else {
      Eigen::MatrixXd h(w.nc, w.nc);
      for (int i = 0; i < w.nc; ++i)
        for (int j = 0; j < w.nc; ++j) h(i, j) = hs(k, vidx(i, j, w.nc));
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const double val = svd.singularValues()(0) - cap;
      worst = std::max(worst, val);
      if (val >= -atol) {
        const Eigen::MatrixXd outer = svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
        Eigen::VectorXd g = Eigen::VectorXd::Zero(w.n);
        for (int i = 0; i < w.nc; ++i)
          for (int j = 0; j < w.nc; ++j) g(static_cast<Eigen::Index>(k) * w.n2 + vidx(i, j, w.nc)) = outer(i, j);
        active.push_back(Constraint{val, std::move(g)});
      }
    }
  }
  if (!w.gamma_cols.empty()) {
    const Eigen::MatrixXd g = w.gamma_matrix(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    Eigen::Index arg = 0;
    const double lmin = es.eigenvalues().minCoeff(&arg);
    const double val = -lmin;
    worst = std::max(worst, val);
    if (val >= -atol) {
      const Eigen::VectorXd vv = es.eigenvectors().col(arg);
      Eigen::VectorXd gg = Eigen::VectorXd::Zero(w.n);
      for (const auto& gc : w.gamma_cols)
        gg(gc.col) = gc.i == gc.j ? -vv(gc.i) * vv(gc.i) : -2.0 * vv(gc.i) * vv(gc.j);
      active.push_back(Constraint{val, std::move(gg)});
    }
  }

  KktResidual out;
  out.feasibility = std::max(worst, 0.0);
  if (active.empty()) {
    out.stationarity = grad.norm();
    out.complementarity = 0.0;
    return out;
  }

  // Nonnegative least-squares multipliers: solve, clip, drop, repeat.
  Eigen::MatrixXd jac(w.n, static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) jac.col(static_cast<Eigen::Index>(i)) = active[i].gradient;
  std::vector<bool> keep(active.size(), true);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(active.size()));
  for (int round = 0; round < 50; ++round) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) idx.push_back(static_cast<Eigen::Index>(i));
    if (idx.empty()) break;
    Eigen::MatrixXd a(w.n, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = jac.col(idx[i]);
    const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(-grad);
    Eigen::Index worst_i = -1;
    double worst_v = -1e-12;
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (sol(static_cast<Eigen::Index>(i)) < worst_v) {
        worst_v = sol(static_cast<Eigen::Index>(i));
        worst_i = static_cast<Eigen::Index>(i);
      }
    if (worst_i < 0) {
      mu.setZero();
      for (std::size_t i = 0; i < idx.size(); ++i) mu(idx[i]) = std::max(sol(static_cast<Eigen::Index>(i)), 0.0);
      break;
    }
    keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(worst_i)])] = false;
  }
  out.stationarity = (grad + jac * mu).norm();
  double comp = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i)
    comp = std::max(comp, std::abs(mu(static_cast<Eigen::Index>(i)) * active[i].value));
  out.complementarity = comp;
  return out;
}

SynthesisReport cross_check_projected_gradient(const SynthesisProblem& problem) {
  const auto t_start = std::chrono::steady_clock::now();
  const Workspace w(problem);
  const RegressionData& reg = problem.regression;
  const Eigen::MatrixXd& gram = reg.gram();
  const Eigen::VectorXd& rhs0 = reg.rhs();

  const double lip = 2.0 * (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .maxCoeff() +
                            w.ridge);
  const double step = 1.0 / std::max(lip, 1e-12);

  // Warm start from the ridge solution, projected feasible.
  Eigen::VectorXd x;
  {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += std::max(w.ridge, 1e-14 * std::max(gram.trace(), 1.0));
    x = Eigen::LDLT<Eigen::MatrixXd>(a).solve(rhs0);
  }
  w.project_dykstra(x, 1e-12, 400);

  // Projected gradient with Nesterov momentum and gradient restart; each
  // iterate is pulled back onto the feasible set by the Dykstra pass.
  int it = 0;
  int stable = 0;
  const int max_iters = 100000;
  Eigen::VectorXd y = x;
  Eigen::VectorXd x_prev = x;
  double tk = 1.0;
  for (; it < max_iters; ++it) {
    const Eigen::VectorXd grad = 2.0 * (gram * y - rhs0) + 2.0 * w.ridge * y;
    Eigen::VectorXd next = y - step * grad;
    w.project_dykstra(next, 1e-12, 100);
    const double delta = (next - x).norm();
    if (grad.dot(next - x) > 0.0) {
      tk = 1.0;
      y = next;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      y = next + ((tk - 1.0) / tn) * (next - x);
      tk = tn;
    }
    x_prev = x;
    x = next;
    if (delta <= 1e-13 * std::max(1.0, x.norm()))
      ++stable;
    else
      stable = 0;
    if (stable >= 8) break;
  }
  w.polish(x, 1e-12, 2000);

  SynthesisReport rep;
  rep.params = reg.unpack(x);
  rep.objective_value = reg.objective(x) + w.ridge * x.squaredNorm();
  rep.max_constraint_violation = w.violation(x);
  rep.iterations = it;
  rep.kkt = kkt_residual(problem, rep.params);
  rep.certificate = passivity_margin(rep.params, problem.settings.dense_grid_points);
  rep.certificate.grid_size = w.grid_m;
  rep.certificate.epsilon = w.eps;
  rep.certificate.rho0 = problem.settings.rho0;
  rep.certificate.rho = problem.settings.rho;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

}  // namespace pivc
