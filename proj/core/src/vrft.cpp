#include "pivc/vrft.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pivc {

using json = nlohmann::json;

Signal virtual_error(const Signal& y, const ContinuousTf& m_r, const InverseConfig& cfg) {
  y.validate();
  m_r.validate();
  if (y.channels() != m_r.rows) throw std::invalid_argument("virtual_error: channel mismatch");
  if (cfg.exact_discrete) {
    if (!m_r.is_diagonal()) throw std::invalid_argument("virtual_error: exact inverse needs a diagonal model");
    std::vector<RationalTf> entries;
    for (int i = 0; i < m_r.rows; ++i) {
      ContinuousTf one;
      one.rows = one.cols = 1;
      one.entries.push_back(m_r.entry(i, i));
      entries.push_back(ss_to_tf(discretize(one, y.sample_period_s, Discretization::Zoh)));
    }
    return virtual_error_exact(y, entries);
  }
  const ContinuousTf inv = approximate_inverse(m_r, cfg.pole_scale);
  const DiscreteSs inv_d = discretize(inv, y.sample_period_s, cfg.method);
  const Signal r_virtual = simulate_lti(inv_d, y);
  Signal e = y;
  e.samples = r_virtual.samples - y.samples;
  return e;
}

Signal virtual_error_exact(const Signal& y, const std::vector<RationalTf>& m_r_discrete) {
  y.validate();
  if (static_cast<Eigen::Index>(m_r_discrete.size()) != y.channels())
    throw std::invalid_argument("virtual_error_exact: one entry per channel required");

  int max_rel = 0;
  for (const auto& e : m_r_discrete) max_rel = std::max(max_rel, e.relative_degree());
  const Eigen::Index n_out = y.length() - max_rel;
  if (n_out < 1) throw std::invalid_argument("virtual_error_exact: record too short");

  Eigen::MatrixXd rv = Eigen::MatrixXd::Zero(n_out, y.channels());
  for (Eigen::Index c = 0; c < y.channels(); ++c) {
    const auto den = poly_trim(m_r_discrete[static_cast<std::size_t>(c)].den);
    const auto num = poly_trim(m_r_discrete[static_cast<std::size_t>(c)].num);
    if (num.empty() || num[0] == 0.0) throw std::invalid_argument("virtual_error_exact: zero numerator");
    const int d = static_cast<int>(den.size()) - static_cast<int>(num.size());
    if (d < 0) throw std::invalid_argument("virtual_error_exact: improper model");
    // num(z) r = den(z) y solved for the most advanced r sample.
    for (Eigen::Index t = 0; t < n_out; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < den.size(); ++i) {
        const Eigen::Index yi = t + d - static_cast<Eigen::Index>(i);
        if (yi >= 0 && yi < y.length()) acc += den[i] * y.samples(yi, c);
      }
      for (std::size_t i = 1; i < num.size(); ++i) {
        const Eigen::Index ri = t - static_cast<Eigen::Index>(i);
        if (ri >= 0) acc -= num[i] * rv(ri, c);
      }
      rv(t, c) = acc / num[0];
    }
  }
  rv -= y.samples.topRows(n_out);
  return Signal(y.sample_period_s, std::move(rv), y.start_time_s);
}

RegressionData::RegressionData(const Signal& e, const Signal& u, int m, RegressionOptions opts)
    : e_(e), u_(u), m_(m), opts_(opts) {
  e_.validate();
  u_.validate();
  if (e_.length() != u_.length() || e_.channels() != u_.channels())
    throw std::invalid_argument("RegressionData: e/u shape mismatch");
  if (std::abs(e_.sample_period_s - u_.sample_period_s) > 1e-12)
    throw std::invalid_argument("RegressionData: rate mismatch");
  if (m < 1) throw std::invalid_argument("RegressionData: m must be >= 1");
  if (e_.length() <= m) throw std::invalid_argument("RegressionData: record shorter than controller order");
  n_c_ = static_cast<int>(e_.channels());
  ts_ = e_.sample_period_s;
  first_row_ = opts_.drop_partial_history ? m_ - 1 : 0;

  integral_ = e_;
  for (Eigen::Index t = 0; t < e_.length(); ++t) {
    integral_.samples.row(t) = ts_ * e_.samples.row(t);
    if (t > 0) integral_.samples.row(t) += integral_.samples.row(t - 1);
  }

  for (int k = 0; k < m_; ++k)
    for (int i = 0; i < n_c_; ++i)
      for (int j = 0; j < n_c_; ++j) layout_.push_back(ParamRef{ParamRef::Tap, k, i, j});
  if (opts_.include_gamma)
    for (int i = 0; i < n_c_; ++i)
      for (int j = i; j < n_c_; ++j) layout_.push_back(ParamRef{ParamRef::Gamma, 0, i, j});
}

Eigen::Index RegressionData::rows() const { return (e_.length() - first_row_) * n_c_; }

Eigen::MatrixXd RegressionData::assemble_rows(Eigen::Index t0, Eigen::Index t1) const {
  const Eigen::Index nt = t1 - t0;
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(nt * n_c_, cols());
  for (Eigen::Index t = t0; t < t1; ++t) {
    const Eigen::Index base = (t - t0) * n_c_;
    for (Eigen::Index col = 0; col < cols(); ++col) {
      const ParamRef& ref = layout_[static_cast<std::size_t>(col)];
      if (ref.kind == ParamRef::Tap) {
        const Eigen::Index tk = t - ref.k;
        if (tk >= 0) phi(base + ref.i, col) = e_.samples(tk, ref.j);
      } else if (ref.i == ref.j) {
        phi(base + ref.i, col) = integral_.samples(t, ref.i);
      } else {
        phi(base + ref.i, col) = integral_.samples(t, ref.j);
        phi(base + ref.j, col) = integral_.samples(t, ref.i);
      }
    }
  }
  return phi;
}

Eigen::VectorXd RegressionData::stacked_target(Eigen::Index t0, Eigen::Index t1) const {
  Eigen::VectorXd out((t1 - t0) * n_c_);
  for (Eigen::Index t = t0; t < t1; ++t) out.segment((t - t0) * n_c_, n_c_) = u_.samples.row(t).transpose();
  return out;
}

Eigen::MatrixXd RegressionData::dense_phi() const { return assemble_rows(first_row_, e_.length()); }

const Eigen::MatrixXd& RegressionData::gram() const {
  if (!gram_) {
    const double inv_n = 1.0 / static_cast<double>(e_.length() - first_row_);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(cols(), cols());
    const Eigen::Index block = std::max<Eigen::Index>(1, 4096 / std::max<Eigen::Index>(n_c_, 1));
    for (Eigen::Index t0 = first_row_; t0 < e_.length(); t0 += block) {
      const Eigen::Index t1 = std::min(t0 + block, e_.length());
      const Eigen::MatrixXd phi = assemble_rows(t0, t1);
      g.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), inv_n);
    }
    gram_ = g.selfadjointView<Eigen::Lower>();
  }
  return *gram_;
}

const Eigen::VectorXd& RegressionData::rhs() const {
  if (!rhs_) {
    const double inv_n = 1.0 / static_cast<double>(e_.length() - first_row_);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(cols());
    const Eigen::Index block = std::max<Eigen::Index>(1, 4096 / std::max<Eigen::Index>(n_c_, 1));
    for (Eigen::Index t0 = first_row_; t0 < e_.length(); t0 += block) {
      const Eigen::Index t1 = std::min(t0 + block, e_.length());
      r += assemble_rows(t0, t1).transpose() * stacked_target(t0, t1) * inv_n;
    }
    rhs_ = r;
  }
  return *rhs_;
}

double RegressionData::target_mss() const {
  return u_.samples.bottomRows(u_.length() - first_row_).squaredNorm() /
         static_cast<double>(u_.length() - first_row_);
}

double RegressionData::objective(const Eigen::VectorXd& x) const {
  if (x.size() != cols()) throw std::invalid_argument("RegressionData::objective: size mismatch");
  // (1/N)|Phi x - u|^2 expanded through the cached Gram pieces.
  return x.dot(gram() * x) - 2.0 * rhs().dot(x) + target_mss();
}

IfirParams RegressionData::unpack(const Eigen::VectorXd& x) const {
  if (x.size() != cols()) throw std::invalid_argument("RegressionData::unpack: size mismatch");
  IfirParams p;
  p.sample_period_s = ts_;
  p.taps.assign(static_cast<std::size_t>(m_), Eigen::MatrixXd::Zero(n_c_, n_c_));
  p.gamma = Eigen::MatrixXd::Zero(n_c_, n_c_);
  for (Eigen::Index col = 0; col < cols(); ++col) {
    const ParamRef& ref = layout_[static_cast<std::size_t>(col)];
    if (ref.kind == ParamRef::Tap) {
      p.taps[static_cast<std::size_t>(ref.k)](ref.i, ref.j) = x(col);
    } else {
      p.gamma(ref.i, ref.j) = x(col);
      p.gamma(ref.j, ref.i) = x(col);
    }
  }
  return p;
}

Eigen::VectorXd RegressionData::pack(const IfirParams& p) const {
  if (p.order() != m_ || p.channels() != n_c_) throw std::invalid_argument("RegressionData::pack: shape mismatch");
  Eigen::VectorXd x(cols());
  for (Eigen::Index col = 0; col < cols(); ++col) {
    const ParamRef& ref = layout_[static_cast<std::size_t>(col)];
    x(col) = ref.kind == ParamRef::Tap ? p.taps[static_cast<std::size_t>(ref.k)](ref.i, ref.j)
                                       : p.gamma(ref.i, ref.j);
  }
  return x;
}

IfirParams fit_unconstrained(const RegressionData& reg, double ridge, double* residual) {
  const Eigen::MatrixXd& g = reg.gram();
  if (ridge < 0.0) ridge = 1e-8 * g.trace() / static_cast<double>(reg.cols());
  Eigen::MatrixXd a = g;
  if (ridge > 0.0) a.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw std::invalid_argument("fit_unconstrained: rank-deficient regressor with zero ridge");
  }
  if (ridge == 0.0) {
    const Eigen::VectorXd dvec = ldlt.vectorD();
    if (dvec.minCoeff() <= 1e-12 * std::max(dvec.maxCoeff(), 1e-300))
      throw std::invalid_argument("fit_unconstrained: rank-deficient regressor with zero ridge");
  }
  const Eigen::VectorXd x = ldlt.solve(reg.rhs());
  if (residual) *residual = reg.objective(x);
  return reg.unpack(x);
}

void PidParams::validate() const {
  const auto n = kp.rows();
  if (n < 1 || kp.cols() != n || ki.rows() != n || ki.cols() != n || kd.rows() != n || kd.cols() != n)
    throw std::invalid_argument("PidParams: gain dimension mismatch");
  if (!(tau_d > 0.0) || !(sample_period_s > 0.0))
    throw std::invalid_argument("PidParams: tau_d and sample period must be > 0");
  if (!kp.allFinite() || !ki.allFinite() || !kd.allFinite())
    throw std::invalid_argument("PidParams: non-finite gain");
}

Signal filtered_derivative(const Signal& e, double tau_d) {
  e.validate();
  if (!(tau_d > 0.0)) throw std::invalid_argument("filtered_derivative: tau_d must be > 0");
  const double ts = e.sample_period_s;
  const double a0 = 2.0 * tau_d + ts;
  const double a1 = ts - 2.0 * tau_d;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(e.length(), e.channels());
  Eigen::VectorXd prev_e = Eigen::VectorXd::Zero(e.channels());
  Eigen::VectorXd prev_d = Eigen::VectorXd::Zero(e.channels());
  for (Eigen::Index t = 0; t < e.length(); ++t) {
    const Eigen::VectorXd et = e.samples.row(t).transpose();
    const Eigen::VectorXd dt = (2.0 * (et - prev_e) - a1 * prev_d) / a0;
    out.row(t) = dt.transpose();
    prev_e = et;
    prev_d = dt;
  }
  return Signal(ts, std::move(out), e.start_time_s);
}

namespace {

Eigen::MatrixXd psd_project_sym(const Eigen::MatrixXd& k) {
  const Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

PidParams fit_pid(const Signal& e, const Signal& u, bool passive, double tau_d) {
  e.validate();
  u.validate();
  if (e.length() != u.length() || e.channels() != u.channels())
    throw std::invalid_argument("fit_pid: shape mismatch");
  const double ts = e.sample_period_s;
  if (tau_d < 0.0) tau_d = 2.0 * ts;
  const auto n = e.channels();
  const Eigen::Index nt = e.length();

  Signal integral = e;
  for (Eigen::Index t = 0; t < nt; ++t) {
    integral.samples.row(t) = ts * e.samples.row(t);
    if (t > 0) integral.samples.row(t) += integral.samples.row(t - 1);
  }
  const Signal deriv = filtered_derivative(e, tau_d);

  // Columns: kp entries, then ki, then kd (row-major each).
  const Eigen::Index ncols = 3 * n * n;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(ncols, ncols);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ncols);
  Eigen::MatrixXd row_block = Eigen::MatrixXd::Zero(n, ncols);
  for (Eigen::Index t = 0; t < nt; ++t) {
    row_block.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        row_block(i, i * n + j) = e.samples(t, j);
        row_block(i, n * n + i * n + j) = integral.samples(t, j);
        row_block(i, 2 * n * n + i * n + j) = deriv.samples(t, j);
      }
    gram.selfadjointView<Eigen::Lower>().rankUpdate(row_block.transpose(), 1.0);
    rhs += row_block.transpose() * u.samples.row(t).transpose();
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  // Equilibrate: the derivative columns dwarf the others, so scale each
  // column to unit diagonal before applying a tiny ridge.
  Eigen::VectorXd scale = gram.diagonal().cwiseMax(1e-300).cwiseSqrt();
  Eigen::MatrixXd gs = scale.cwiseInverse().asDiagonal() * gram * scale.cwiseInverse().asDiagonal();
  gs.diagonal().array() += 1e-12;
  const Eigen::VectorXd xs = Eigen::LDLT<Eigen::MatrixXd>(gs).solve(scale.cwiseInverse().asDiagonal() * rhs);
  const Eigen::VectorXd x = scale.cwiseInverse().asDiagonal() * xs;

  PidParams p;
  p.tau_d = tau_d;
  p.sample_period_s = ts;
  p.kp = Eigen::MatrixXd::Zero(n, n);
  p.ki = Eigen::MatrixXd::Zero(n, n);
  p.kd = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      p.kp(i, j) = x(i * n + j);
      p.ki(i, j) = x(n * n + i * n + j);
      p.kd(i, j) = x(2 * n * n + i * n + j);
    }
  if (passive) {
    p.kp = psd_project_sym(p.kp);
    p.ki = psd_project_sym(p.ki);
    p.kd = psd_project_sym(p.kd);
  }
  return p;
}

PidState PidState::initial(const PidParams& p) {
  PidState s;
  s.accumulator = Eigen::VectorXd::Zero(p.channels());
  s.deriv_state = Eigen::VectorXd::Zero(2 * p.channels());  // [prev_e; prev_d]
  return s;
}

Eigen::VectorXd pid_step(const PidParams& p, PidState& state, const Eigen::VectorXd& e) {
  if (e.size() != p.channels()) throw std::invalid_argument("pid_step: channel mismatch");
  const auto n = p.channels();
  const double ts = p.sample_period_s;
  const double a0 = 2.0 * p.tau_d + ts;
  const double a1 = ts - 2.0 * p.tau_d;
  state.accumulator += ts * e;
  const Eigen::VectorXd prev_e = state.deriv_state.head(n);
  const Eigen::VectorXd prev_d = state.deriv_state.tail(n);
  const Eigen::VectorXd d = (2.0 * (e - prev_e) - a1 * prev_d) / a0;
  state.deriv_state.head(n) = e;
  state.deriv_state.tail(n) = d;
  return p.kp * e + p.ki * state.accumulator + p.kd * d;
}

Signal eval_pid(const PidParams& p, const Signal& error) {
  p.validate();
  error.validate();
  if (error.channels() != p.channels()) throw std::invalid_argument("eval_pid: channel mismatch");
  PidState st = PidState::initial(p);
  Eigen::MatrixXd out(error.length(), error.channels());
  for (Eigen::Index t = 0; t < error.length(); ++t)
    out.row(t) = pid_step(p, st, error.samples.row(t).transpose()).transpose();
  return Signal(p.sample_period_s, std::move(out), error.start_time_s);
}

namespace {

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return v;
}

Eigen::MatrixXd unflat(const std::vector<double>& v, Eigen::Index n) {
  if (v.size() != static_cast<std::size_t>(n * n)) throw std::invalid_argument("pid_from_json: size mismatch");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v[static_cast<std::size_t>(i * n + j)];
  return m;
}

}  // namespace

std::string pid_to_json(const PidParams& p) {
  p.validate();
  json j;
  j["type"] = "pid";
  j["n"] = p.channels();
  j["kp"] = flat(p.kp);
  j["ki"] = flat(p.ki);
  j["kd"] = flat(p.kd);
  j["tau_d"] = p.tau_d;
  j["ts"] = p.sample_period_s;
  return j.dump(2);
}

PidParams pid_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("type", "pid") != "pid") throw std::invalid_argument("pid_from_json: wrong controller type");
  const auto n = j.at("n").get<Eigen::Index>();
  PidParams p;
  p.kp = unflat(j.at("kp").get<std::vector<double>>(), n);
  p.ki = unflat(j.at("ki").get<std::vector<double>>(), n);
  p.kd = unflat(j.at("kd").get<std::vector<double>>(), n);
  p.tau_d = j.at("tau_d").get<double>();
  p.sample_period_s = j.at("ts").get<double>();
  p.validate();
  return p;
}

}  // namespace pivc
