#include "pivc/lti.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pivc {

using json = nlohmann::json;

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

std::vector<double> poly_add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[out.size() - a.size() + i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[out.size() - b.size() + i] += b[i];
  return out;
}

std::vector<double> poly_scale(const std::vector<double>& a, double s) {
  std::vector<double> out = a;
  for (double& c : out) c *= s;
  return out;
}

std::vector<double> poly_trim(const std::vector<double>& a) {
  std::size_t i = 0;
  while (i + 1 < a.size() && a[i] == 0.0) ++i;
  return std::vector<double>(a.begin() + static_cast<std::ptrdiff_t>(i), a.end());
}

std::complex<double> poly_eval(const std::vector<double>& a, std::complex<double> x) {
  std::complex<double> acc(0.0, 0.0);
  for (double c : a) acc = acc * x + c;
  return acc;
}

std::vector<std::complex<double>> poly_roots(const std::vector<double>& a) {
  const auto p = poly_trim(a);
  if (p.size() <= 1) return {};
  const auto n = static_cast<Eigen::Index>(p.size()) - 1;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) companion(0, i) = -p[static_cast<std::size_t>(i) + 1] / p[0];
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, /*computeEigenvectors=*/false);
  std::vector<std::complex<double>> roots(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) roots[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  return roots;
}

bool RationalTf::is_zero() const {
  for (double c : num)
    if (c != 0.0) return false;
  return true;
}

int RationalTf::relative_degree() const {
  const auto n = poly_trim(num);
  const auto d = poly_trim(den);
  if (is_zero()) return 0;
  return static_cast<int>(d.size()) - static_cast<int>(n.size());
}

ContinuousTf ContinuousTf::siso(std::vector<double> num, std::vector<double> den) {
  ContinuousTf tf;
  tf.rows = 1;
  tf.cols = 1;
  tf.entries.push_back(RationalTf{std::move(num), std::move(den)});
  tf.validate();
  return tf;
}

ContinuousTf ContinuousTf::diagonal(const RationalTf& entry, int n) {
  ContinuousTf tf;
  tf.rows = n;
  tf.cols = n;
  tf.entries.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), RationalTf{{0.0}, {1.0}});
  for (int i = 0; i < n; ++i) tf.entry(i, i) = entry;
  tf.validate();
  return tf;
}

bool ContinuousTf::is_diagonal() const {
  if (rows != cols) return false;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (i != j && !entry(i, j).is_zero()) return false;
  return true;
}

void ContinuousTf::validate() const {
  if (rows < 1 || cols < 1 || entries.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::invalid_argument("ContinuousTf: inconsistent dimensions");
  for (const auto& e : entries) {
    const auto d = poly_trim(e.den);
    if (d.empty() || d[0] == 0.0) throw std::invalid_argument("ContinuousTf: zero denominator");
    const auto n = poly_trim(e.num);
    if (!e.is_zero() && n.size() > d.size()) throw std::invalid_argument("ContinuousTf: improper entry");
    for (double c : e.num)
      if (!std::isfinite(c)) throw std::invalid_argument("ContinuousTf: non-finite coefficient");
    for (double c : e.den)
      if (!std::isfinite(c)) throw std::invalid_argument("ContinuousTf: non-finite coefficient");
  }
}

void DiscreteSs::validate() const {
  if (a.rows() != a.cols()) throw std::invalid_argument("DiscreteSs: A must be square");
  if (b.rows() != a.rows() || c.cols() != a.cols() || d.rows() != c.rows() || d.cols() != b.cols())
    throw std::invalid_argument("DiscreteSs: dimension mismatch");
  if (!(sample_period_s > 0.0)) throw std::invalid_argument("DiscreteSs: sample period must be > 0");
  if (!a.allFinite() || !b.allFinite() || !c.allFinite() || !d.allFinite())
    throw std::invalid_argument("DiscreteSs: non-finite entry");
}

ContinuousTf first_order_ref(double tau_s) {
  if (!(tau_s > 0.0)) throw std::invalid_argument("first_order_ref: tau must be > 0");
  return ContinuousTf::siso({1.0}, {tau_s, 1.0});
}

ContinuousTf second_order_ref(double omega_n, double zeta) {
  if (!(omega_n > 0.0) || !(zeta > 0.0)) throw std::invalid_argument("second_order_ref: parameters must be > 0");
  return ContinuousTf::siso({omega_n * omega_n}, {1.0, 2.0 * zeta * omega_n, omega_n * omega_n});
}

namespace {

// Controllable canonical form of one proper SISO entry.
struct SisoSs {
  Eigen::MatrixXd a, b, c;
  double d = 0.0;
};

SisoSs siso_realize(const RationalTf& tf) {
  const auto den = poly_trim(tf.den);
  auto num = poly_trim(tf.num);
  const auto n = static_cast<Eigen::Index>(den.size()) - 1;
  SisoSs ss;
  ss.a = Eigen::MatrixXd::Zero(n, n);
  ss.b = Eigen::MatrixXd::Zero(n, 1);
  ss.c = Eigen::MatrixXd::Zero(1, n);
  if (tf.is_zero()) {
    return ss;  // exact zero entry: no dynamics
  }
  std::vector<double> monic_den(den.size());
  for (std::size_t i = 0; i < den.size(); ++i) monic_den[i] = den[i] / den[0];
  std::vector<double> padded_num(den.size(), 0.0);
  std::copy(num.begin(), num.end(), padded_num.begin() + static_cast<std::ptrdiff_t>(den.size() - num.size()));
  for (double& v : padded_num) v /= den[0];

  ss.d = padded_num[0];
  if (n == 0) return ss;
  for (Eigen::Index i = 0; i < n; ++i) ss.a(0, i) = -monic_den[static_cast<std::size_t>(i) + 1];
  for (Eigen::Index i = 1; i < n; ++i) ss.a(i, i - 1) = 1.0;
  ss.b(0, 0) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i)
    ss.c(0, i) = padded_num[static_cast<std::size_t>(i) + 1] - ss.d * monic_den[static_cast<std::size_t>(i) + 1];
  return ss;
}

}  // namespace

DiscreteSs discretize(const ContinuousTf& model, double ts, Discretization method) {
  model.validate();
  if (!(ts > 0.0)) throw std::invalid_argument("discretize: ts must be > 0");

  // Continuous block-diagonal realization across entries.
  Eigen::Index total = 0;
  std::vector<SisoSs> blocks;
  blocks.reserve(model.entries.size());
  for (int i = 0; i < model.rows; ++i)
    for (int j = 0; j < model.cols; ++j) {
      blocks.push_back(siso_realize(model.entry(i, j)));
      total += blocks.back().a.rows();
    }
  Eigen::MatrixXd ac = Eigen::MatrixXd::Zero(total, total);
  Eigen::MatrixXd bc = Eigen::MatrixXd::Zero(total, model.cols);
  Eigen::MatrixXd cc = Eigen::MatrixXd::Zero(model.rows, total);
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(model.rows, model.cols);
  Eigen::Index at = 0;
  std::size_t idx = 0;
  for (int i = 0; i < model.rows; ++i)
    for (int j = 0; j < model.cols; ++j, ++idx) {
      const auto& blk = blocks[idx];
      const auto n = blk.a.rows();
      if (n > 0) {
        ac.block(at, at, n, n) = blk.a;
        bc.block(at, j, n, 1) = blk.b;
        cc.block(i, at, 1, n) = blk.c;
      }
      dc(i, j) += blk.d;
      at += n;
    }

  DiscreteSs out;
  out.sample_period_s = ts;
  if (total == 0) {
    out.a.resize(0, 0);
    out.b.resize(0, model.cols);
    out.c.resize(model.rows, 0);
    out.d = dc;
    return out;
  }

  if (method == Discretization::Zoh) {
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(total + model.cols, total + model.cols);
    aug.topLeftCorner(total, total) = ac * ts;
    aug.topRightCorner(total, model.cols) = bc * ts;
    const Eigen::MatrixXd e = aug.exp();
    if (!e.allFinite()) throw std::runtime_error("discretize: matrix exponential overflow");
    out.a = e.topLeftCorner(total, total);
    out.b = e.topRightCorner(total, model.cols);
    out.c = cc;
    out.d = dc;
  } else {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(total, total);
    const Eigen::MatrixXd m = eye - ac * (ts / 2.0);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    out.a = lu.solve(eye + ac * (ts / 2.0));
    out.b = lu.solve(bc * ts);
    out.c = cc * lu.solve(eye);
    out.d = dc + cc * lu.solve(bc * (ts / 2.0));
    if (!out.a.allFinite() || !out.b.allFinite() || !out.c.allFinite() || !out.d.allFinite())
      throw std::runtime_error("discretize: tustin map singular");
  }
  return out;
}

Signal simulate_lti(const DiscreteSs& model, const Signal& input, const Eigen::VectorXd& x0) {
  model.validate();
  input.validate();
  if (std::abs(model.sample_period_s - input.sample_period_s) > 1e-12)
    throw std::invalid_argument("simulate_lti: rate mismatch");
  if (input.channels() != model.inputs()) throw std::invalid_argument("simulate_lti: channel mismatch");
  Eigen::VectorXd x = x0.size() > 0 ? x0 : Eigen::VectorXd::Zero(model.states());
  if (x.size() != model.states()) throw std::invalid_argument("simulate_lti: state size mismatch");

  Eigen::MatrixXd out(input.length(), model.outputs());
  for (Eigen::Index k = 0; k < input.length(); ++k) {
    const Eigen::VectorXd u = input.samples.row(k).transpose();
    out.row(k) = (model.c * x + model.d * u).transpose();
    x = model.a * x + model.b * u;
  }
  return Signal(model.sample_period_s, std::move(out), input.start_time_s);
}

ContinuousTf approximate_inverse(const ContinuousTf& model, double pole_scale) {
  model.validate();
  if (!(pole_scale > 1.0)) throw std::invalid_argument("approximate_inverse: pole_scale must exceed 1");
  if (!model.is_diagonal())
    throw std::invalid_argument("approximate_inverse: only diagonal transfer matrices are invertible here");

  ContinuousTf out = model;
  for (int i = 0; i < model.rows; ++i) {
    const auto& e = model.entry(i, i);
    if (e.is_zero()) throw std::invalid_argument("approximate_inverse: zero diagonal entry");
    const auto num = poly_trim(e.num);
    const auto den = poly_trim(e.den);
    for (const auto& z : poly_roots(num)) {
      if (z.real() > -1e-9) throw std::invalid_argument("approximate_inverse: nonminimum-phase model");
    }
    double fastest = 0.0;
    for (const auto& p : poly_roots(den)) fastest = std::max(fastest, std::abs(p));
    if (fastest == 0.0) fastest = 1.0;  // static gain: no dynamics to properize
    const double p0 = pole_scale * fastest;

    const int rel = static_cast<int>(den.size()) - static_cast<int>(num.size());
    std::vector<double> new_den = num;
    for (int r = 0; r < rel; ++r) new_den = poly_mul(new_den, {1.0 / p0, 1.0});
    out.entry(i, i) = RationalTf{den, new_den};
  }
  out.validate();
  return out;
}

Eigen::MatrixXcd freq_response(const ContinuousTf& model, double omega_rad_s) {
  model.validate();
  Eigen::MatrixXcd g(model.rows, model.cols);
  const std::complex<double> s(0.0, omega_rad_s);
  for (int i = 0; i < model.rows; ++i)
    for (int j = 0; j < model.cols; ++j) {
      const auto& e = model.entry(i, j);
      if (e.is_zero()) {
        g(i, j) = 0.0;
        continue;
      }
      const auto d = poly_eval(e.den, s);
      if (std::abs(d) == 0.0) throw std::invalid_argument("freq_response: evaluation at a pole");
      g(i, j) = poly_eval(e.num, s) / d;
    }
  return g;
}

Eigen::MatrixXcd freq_response(const DiscreteSs& model, double omega_rad_s) {
  model.validate();
  const std::complex<double> z = std::exp(std::complex<double>(0.0, omega_rad_s * model.sample_period_s));
  if (model.states() == 0) return model.d.cast<std::complex<double>>();
  Eigen::MatrixXcd zi = z * Eigen::MatrixXcd::Identity(model.states(), model.states()) -
                        model.a.cast<std::complex<double>>();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(zi);
  const Eigen::MatrixXcd x = lu.solve(model.b.cast<std::complex<double>>());
  if (!x.allFinite()) throw std::invalid_argument("freq_response: evaluation at a pole");
  return model.c.cast<std::complex<double>>() * x + model.d.cast<std::complex<double>>();
}

DiscreteSs series_ss(const DiscreteSs& first, const DiscreteSs& second) {
  first.validate();
  second.validate();
  if (first.outputs() != second.inputs()) throw std::invalid_argument("series_ss: dimension mismatch");
  if (std::abs(first.sample_period_s - second.sample_period_s) > 1e-12)
    throw std::invalid_argument("series_ss: rate mismatch");
  const auto n1 = first.states();
  const auto n2 = second.states();
  DiscreteSs out;
  out.sample_period_s = first.sample_period_s;
  out.a = Eigen::MatrixXd::Zero(n1 + n2, n1 + n2);
  out.a.topLeftCorner(n1, n1) = first.a;
  out.a.bottomLeftCorner(n2, n1) = second.b * first.c;
  out.a.bottomRightCorner(n2, n2) = second.a;
  out.b = Eigen::MatrixXd::Zero(n1 + n2, first.inputs());
  out.b.topRows(n1) = first.b;
  out.b.bottomRows(n2) = second.b * first.d;
  out.c = Eigen::MatrixXd::Zero(second.outputs(), n1 + n2);
  out.c.leftCols(n1) = second.d * first.c;
  out.c.rightCols(n2) = second.c;
  out.d = second.d * first.d;
  return out;
}

DiscreteSs feedback_ss(const DiscreteSs& open_loop) {
  open_loop.validate();
  if (open_loop.inputs() != open_loop.outputs()) throw std::invalid_argument("feedback_ss: loop must be square");
  const auto n = open_loop.states();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(open_loop.outputs(), open_loop.outputs());
  const Eigen::MatrixXd gain = (eye + open_loop.d).inverse();
  DiscreteSs out;
  out.sample_period_s = open_loop.sample_period_s;
  out.a = open_loop.a - open_loop.b * gain * open_loop.c;
  out.b = open_loop.b * gain;
  out.c = gain * open_loop.c;
  out.d = gain * open_loop.d;
  (void)n;
  return out;
}

RationalTf ss_to_tf(const DiscreteSs& model) {
  model.validate();
  if (model.inputs() != 1 || model.outputs() != 1) throw std::invalid_argument("ss_to_tf: SISO only");
  const auto n = model.states();
  // Faddeev-LeVerrier: char poly coefficients and adjugate matrix powers.
  std::vector<double> den(static_cast<std::size_t>(n) + 1, 0.0);
  den[0] = 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> cnum(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = model.a * m + den[static_cast<std::size_t>(k) - 1] * Eigen::MatrixXd::Identity(n, n);
    // C adj(zI-A) B picks up m at this order.
    cnum[static_cast<std::size_t>(k) - 1] = (model.c * m * model.b)(0, 0);
    den[static_cast<std::size_t>(k)] = -(model.a * m).trace() / static_cast<double>(k);
  }
  std::vector<double> num(den.size(), 0.0);
  for (std::size_t i = 0; i < den.size(); ++i) num[i] = model.d(0, 0) * den[i];
  for (std::size_t i = 0; i < cnum.size(); ++i) num[i + 1] += cnum[i];
  return RationalTf{poly_trim(num), den};
}

namespace {

json rational_to_json(const RationalTf& e) { return json{{"num", e.num}, {"den", e.den}}; }

RationalTf rational_from_json(const json& j) {
  RationalTf e;
  e.num = j.at("num").get<std::vector<double>>();
  e.den = j.at("den").get<std::vector<double>>();
  return e;
}

std::vector<std::vector<double>> matrix_to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const std::vector<std::vector<double>>& rows, Eigen::Index cols_hint = -1) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : std::max<Eigen::Index>(cols_hint, 0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c)
      throw std::invalid_argument("matrix_from_rows: ragged rows");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace

std::string tf_to_json(const ContinuousTf& model) {
  model.validate();
  json j;
  j["rows"] = model.rows;
  j["cols"] = model.cols;
  j["entries"] = json::array();
  for (const auto& e : model.entries) j["entries"].push_back(rational_to_json(e));
  return j.dump(2);
}

ContinuousTf tf_from_json(const std::string& text) {
  const json j = json::parse(text);
  ContinuousTf tf;
  tf.rows = j.at("rows").get<int>();
  tf.cols = j.at("cols").get<int>();
  for (const auto& e : j.at("entries")) tf.entries.push_back(rational_from_json(e));
  tf.validate();
  return tf;
}

std::string ss_to_json(const DiscreteSs& model) {
  model.validate();
  json j;
  j["a"] = matrix_to_rows(model.a);
  j["b"] = matrix_to_rows(model.b);
  j["c"] = matrix_to_rows(model.c);
  j["d"] = matrix_to_rows(model.d);
  j["ts"] = model.sample_period_s;
  return j.dump(2);
}

DiscreteSs ss_from_json(const std::string& text) {
  const json j = json::parse(text);
  DiscreteSs m;
  m.a = matrix_from_rows(j.at("a").get<std::vector<std::vector<double>>>());
  m.b = matrix_from_rows(j.at("b").get<std::vector<std::vector<double>>>());
  m.c = matrix_from_rows(j.at("c").get<std::vector<std::vector<double>>>());
  m.d = matrix_from_rows(j.at("d").get<std::vector<std::vector<double>>>());
  m.sample_period_s = j.at("ts").get<double>();
  m.validate();
  return m;
}

}  // namespace pivc
