#include "pivc/ifir.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pivc {

using json = nlohmann::json;

void IfirParams::validate() const {
  if (taps.empty()) throw std::invalid_argument("IfirParams: need at least one tap");
  const auto n = taps[0].rows();
  if (n < 1 || taps[0].cols() != n) throw std::invalid_argument("IfirParams: taps must be square");
  for (const auto& h : taps) {
    if (h.rows() != n || h.cols() != n) throw std::invalid_argument("IfirParams: tap size mismatch");
    if (!h.allFinite()) throw std::invalid_argument("IfirParams: non-finite tap");
  }
  if (gamma.rows() != n || gamma.cols() != n) throw std::invalid_argument("IfirParams: gamma size mismatch");
  if (!gamma.allFinite()) throw std::invalid_argument("IfirParams: non-finite gamma");
  if (!(sample_period_s > 0.0)) throw std::invalid_argument("IfirParams: sample period must be > 0");
}

IfirState IfirState::initial(const IfirParams& p) {
  IfirState s;
  const int n = p.channels();
  s.history.assign(static_cast<std::size_t>(std::max(p.order() - 1, 0)), Eigen::VectorXd::Zero(n));
  s.accumulator = Eigen::VectorXd::Zero(n);
  s.head = 0;
  return s;
}

Eigen::VectorXd ifir_step(const IfirParams& p, IfirState& state, const Eigen::VectorXd& e) {
  if (e.size() != p.channels()) throw std::invalid_argument("ifir_step: channel mismatch");
  state.accumulator += e;
  Eigen::VectorXd u = p.taps[0] * e + p.sample_period_s * (p.gamma * state.accumulator);
  const int hist = static_cast<int>(state.history.size());
  for (int k = 1; k < p.order(); ++k) {
    const int idx = (state.head + k - 1) % hist;
    u += p.taps[static_cast<std::size_t>(k)] * state.history[static_cast<std::size_t>(idx)];
  }
  if (hist > 0) {
    state.head = (state.head + hist - 1) % hist;
    state.history[static_cast<std::size_t>(state.head)] = e;
  }
  return u;
}

Signal eval_ifir(const IfirParams& p, const Signal& error) {
  p.validate();
  error.validate();
  if (error.channels() != p.channels()) throw std::invalid_argument("eval_ifir: channel mismatch");
  IfirState st = IfirState::initial(p);
  Eigen::MatrixXd out(error.length(), error.channels());
  for (Eigen::Index t = 0; t < error.length(); ++t)
    out.row(t) = ifir_step(p, st, error.samples.row(t).transpose()).transpose();
  return Signal(p.sample_period_s, std::move(out), error.start_time_s);
}

Eigen::MatrixXcd popov_function(const IfirParams& p, double theta) {
  p.validate();
  const int n = p.channels();
  Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(n, n);
  for (int k = 0; k < p.order(); ++k) {
    const std::complex<double> w = std::exp(std::complex<double>(0.0, -theta * k));
    f += p.taps[static_cast<std::size_t>(k)].cast<std::complex<double>>() * w +
         p.taps[static_cast<std::size_t>(k)].transpose().cast<std::complex<double>>() * std::conj(w);
  }
  return f;
}

PassivityCertificate passivity_margin(const IfirParams& p, int grid_points, double tol) {
  p.validate();
  if (grid_points < 2) throw std::invalid_argument("passivity_margin: grid_points must be >= 2");
  PassivityCertificate cert;
  cert.dense_grid_points = grid_points;
  cert.fir_min_eig = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double theta = M_PI * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    const Eigen::MatrixXcd f = popov_function(p, theta);
    double lmin;
    if (f.rows() == 1) {
      lmin = f(0, 0).real();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f, Eigen::EigenvaluesOnly);
      lmin = es.eigenvalues().minCoeff();
    }
    if (lmin < cert.fir_min_eig) {
      cert.fir_min_eig = lmin;
      cert.argmin_theta = theta;
    }
  }
  const Eigen::MatrixXd gsym = p.gamma + p.gamma.transpose();
  if (gsym.rows() == 1) {
    cert.gamma_min_eig = gsym(0, 0);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gsym, Eigen::EigenvaluesOnly);
    cert.gamma_min_eig = es.eigenvalues().minCoeff();
  }
  cert.dense_check_min_eig = std::min(cert.fir_min_eig, cert.gamma_min_eig);
  cert.verdict = cert.fir_min_eig >= -tol && cert.gamma_min_eig >= -tol;
  return cert;
}

DiscreteSs ifir_to_ss(const IfirParams& p) {
  p.validate();
  const int n = p.channels();
  const int m = p.order();
  const Eigen::Index delays = static_cast<Eigen::Index>(m - 1) * n;
  const Eigen::Index states = delays + n;  // delay line plus accumulator
  DiscreteSs ss;
  ss.sample_period_s = p.sample_period_s;
  ss.a = Eigen::MatrixXd::Zero(states, states);
  ss.b = Eigen::MatrixXd::Zero(states, n);
  ss.c = Eigen::MatrixXd::Zero(n, states);
  ss.d = p.taps[0] + p.sample_period_s * p.gamma;
  for (int k = 1; k < m - 1; ++k)
    ss.a.block(static_cast<Eigen::Index>(k) * n, static_cast<Eigen::Index>(k - 1) * n, n, n) =
        Eigen::MatrixXd::Identity(n, n);
  ss.a.block(delays, delays, n, n) = Eigen::MatrixXd::Identity(n, n);  // accumulator
  if (m > 1) ss.b.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  ss.b.bottomRows(n) = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k < m; ++k)
    ss.c.block(0, static_cast<Eigen::Index>(k - 1) * n, n, n) = p.taps[static_cast<std::size_t>(k)];
  ss.c.rightCols(n) = p.sample_period_s * p.gamma;
  return ss;
}

double epsilon_bound(int m, int grid_m, double rho0, double rho) {
  if (m < 1) throw std::invalid_argument("epsilon_bound: m must be >= 1");
  if (grid_m < 2) throw std::invalid_argument("epsilon_bound: M must be >= 2");
  if (!(rho0 >= 1.0)) throw std::invalid_argument("epsilon_bound: rho0 must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("epsilon_bound: rho must lie in (0,1)");
  return (static_cast<double>(m - 1) / static_cast<double>(grid_m)) * M_PI * rho0 *
         (1.0 - std::pow(rho, m)) / (1.0 - rho);
}

namespace {

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return v;
}

Eigen::MatrixXd unflat(const std::vector<double>& v, int n) {
  if (v.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    throw std::invalid_argument("ifir_from_json: matrix size mismatch");
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = v[static_cast<std::size_t>(i * n + j)];
  return m;
}

}  // namespace

std::string ifir_to_json(const IfirParams& p, const PassivityCertificate& cert) {
  p.validate();
  json j;
  j["type"] = "ifir";
  j["ts"] = p.sample_period_s;
  j["n"] = p.channels();
  j["gamma"] = flat(p.gamma);
  j["taps"] = json::array();
  for (const auto& h : p.taps) j["taps"].push_back(flat(h));
  j["certificate"] = {{"grid_size", cert.grid_size},
                      {"epsilon", cert.epsilon},
                      {"rho0", cert.rho0},
                      {"rho", cert.rho},
                      {"dense_check_min_eig", cert.dense_check_min_eig},
                      {"dense_grid_points", cert.dense_grid_points},
                      {"fir_min_eig", cert.fir_min_eig},
                      {"gamma_min_eig", cert.gamma_min_eig},
                      {"verdict", cert.verdict}};
  return j.dump(2);
}

IfirParams ifir_from_json(const std::string& text, PassivityCertificate* cert) {
  const json j = json::parse(text);
  if (j.value("type", "ifir") != "ifir") throw std::invalid_argument("ifir_from_json: wrong controller type");
  IfirParams p;
  p.sample_period_s = j.at("ts").get<double>();
  const int n = j.at("n").get<int>();
  p.gamma = unflat(j.at("gamma").get<std::vector<double>>(), n);
  for (const auto& t : j.at("taps")) p.taps.push_back(unflat(t.get<std::vector<double>>(), n));
  p.validate();
  if (cert) {
    *cert = PassivityCertificate{};
    if (j.contains("certificate")) {
      const auto& c = j.at("certificate");
      cert->grid_size = c.value("grid_size", 0);
      cert->epsilon = c.value("epsilon", 0.0);
      cert->rho0 = c.value("rho0", 1.0);
      cert->rho = c.value("rho", 0.5);
      cert->dense_check_min_eig = c.value("dense_check_min_eig", 0.0);
      cert->dense_grid_points = c.value("dense_grid_points", 0);
      cert->fir_min_eig = c.value("fir_min_eig", 0.0);
      cert->gamma_min_eig = c.value("gamma_min_eig", 0.0);
      cert->verdict = c.value("verdict", false);
    }
  }
  return p;
}

}  // namespace pivc
