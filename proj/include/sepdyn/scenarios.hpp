#pragma once

#include "sepdyn/ensemble.hpp"
#include "sepdyn/hilbert.hpp"
#include "sepdyn/measures.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/sep_mcwf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepdyn {

namespace detail {

inline void check_rates(const std::vector<double>& r, std::size_t n) {
  if (r.size() != n) throw std::invalid_argument("scenario: wrong number of rates");
  for (double x : r)
    if (x < 0.0) throw std::invalid_argument("scenario: negative rate");
}

inline const SystemShape& qubits2() {
  static const SystemShape s{2, 2};
  return s;
}

}  // namespace detail

// Rates (11->Phi+, Phi+->00, 11->Phi-, Phi- ->00).
inline LindbladModel bell_decay_model(std::vector<double> rates = {9.0, 1.0, 1.0, 9.0}) {
  detail::check_rates(rates, 4);
  const auto& s = detail::qubits2();
  const Vec e11 = ket("11", s), e00 = ket("00", s), pp = bell_state("Phi+"), pm = bell_state("Phi-");
  std::vector<Mat> L = {std::sqrt(rates[0]) * outer(pp, e11), std::sqrt(rates[1]) * outer(e00, pp),
                        std::sqrt(rates[2]) * outer(pm, e11), std::sqrt(rates[3]) * outer(e00, pm)};
  return {s, Mat::Zero(4, 4), L, {"gamma_11->Phi+", "gamma_Phi+->00", "gamma_11->Phi-", "gamma_Phi-->00"},
          rates, "bell-decay"};
}

// Rates (11->10, 10->00, 11->01, 01->00).
inline LindbladModel product_decay_model(std::vector<double> rates = {9.0, 1.0, 1.0, 9.0}) {
  detail::check_rates(rates, 4);
  const auto& s = detail::qubits2();
  std::vector<Mat> L = {std::sqrt(rates[0]) * outer(ket("10", s), ket("11", s)),
                        std::sqrt(rates[1]) * outer(ket("00", s), ket("10", s)),
                        std::sqrt(rates[2]) * outer(ket("01", s), ket("11", s)),
                        std::sqrt(rates[3]) * outer(ket("00", s), ket("01", s))};
  return {s, Mat::Zero(4, 4), L, {"gamma_11->10", "gamma_10->00", "gamma_11->01", "gamma_01->00"},
          rates, "product-decay"};
}

// L1 -> (L1+L3)/sqrt2, L3 -> (L3-L1)/sqrt2; needs gamma_11->10 == gamma_11->01.
inline LindbladModel rotated_variant(const LindbladModel& base) {
  if (base.rates.size() != 4 || base.L.size() != 4)
    throw std::invalid_argument("rotated_variant: expects a product-decay model");
  if (std::abs(base.rates[0] - base.rates[2]) > 1e-12 * std::max(1.0, base.rates[0]))
    throw std::invalid_argument("rotated_variant: requires gamma_11->10 == gamma_11->01");
  LindbladModel m = base;
  const double r = 1.0 / std::sqrt(2.0);
  m.L[0] = r * (base.L[0] + base.L[2]);
  m.L[2] = r * (base.L[2] - base.L[0]);
  m.labels[0] = "gamma(11->Phi+)";
  m.labels[2] = "gamma(11->Phi-)";
  m.name = "product-decay-rotated";
  return m;
}

inline Mat cnot_matrix() {
  Mat c = Mat::Zero(4, 4);
  c(0, 0) = c(1, 1) = c(2, 3) = c(3, 2) = 1.0;
  return c;
}

inline LindbladModel cnot_model(double gamma = 1.0) {
  return {detail::qubits2(), Mat::Zero(4, 4), {std::sqrt(gamma) * cnot_matrix()}, {"gamma_cnot"}, {gamma}, "cnot"};
}

inline Mat cnot_steady_state(const Mat& rho0) {
  const Mat L = cnot_matrix();
  return 0.5 * rho0 + 0.5 * L * rho0 * L.adjoint();
}

inline Mat swap_matrix(int d = 2) {
  Mat V = Mat::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) V(j * d + i, i * d + j) = 1.0;
  return V;
}

inline LindbladModel swap_model(double gamma = 1.0, int d = 2) {
  if (!(gamma > 0.0)) throw std::invalid_argument("swap_model: gamma must be positive");
  return {SystemShape{d, d}, Mat::Zero(d * d, d * d), {std::sqrt(gamma) * swap_matrix(d)}, {"gamma_swap"}, {gamma},
          "swap"};
}

// e^{-gamma t}(cosh(gamma t) rho0 + sinh(gamma t) V rho0 V)
inline Mat swap_analytic_full(double t, double gamma, const Mat& rho0) {
  const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rho0.rows()))));
  const Mat V = swap_matrix(d);
  return std::exp(-gamma * t) * (std::cosh(gamma * t) * rho0 + std::sinh(gamma * t) * V * rho0 * V);
}

// Even/odd binomial weights after s steps of size tau.
inline std::pair<double, double> swap_restricted_weights(int s, double tau, double gamma) {
  const double q = std::pow(1.0 - 2.0 * gamma * tau, s);
  return {0.5 * (1.0 + q), 0.5 * (1.0 - q)};
}

inline Mat swap_analytic_restricted(int s, double tau, double gamma, const Vec& psi1, const Vec& psi2) {
  const auto [even, odd] = swap_restricted_weights(s, tau, gamma);
  const Vec a = kron(Vec(psi1 / psi1.norm()), Vec(psi2 / psi2.norm()));
  const Vec b = kron(Vec(psi2 / psi2.norm()), Vec(psi1 / psi1.norm()));
  return even * a * a.adjoint() + odd * b * b.adjoint();
}

// Local-sum projection sum_k 1 x op_k x 1 from normalized partial traces.
inline Mat local_sum_part(const Mat& op, const SystemShape& shape) {
  const int n = shape.parties();
  const int D = shape.total();
  Mat out = Mat::Zero(D, D);
  for (int k = 0; k < n; ++k) {
    const int dk = shape.dim(k);
    Mat red = Mat::Zero(dk, dk);
    // partial trace over all parties but k
    for (int r = 0; r < D; ++r)
      for (int c = 0; c < D; ++c) {
        const int stride = shape.stride(k);
        const int rk = (r / stride) % dk, ck = (c / stride) % dk;
        if (r - rk * stride != c - ck * stride) continue;
        red(rk, ck) += op(r, c);
      }
    red /= static_cast<double>(D / dk);
    out += embed_local(red, k, shape);
  }
  out -= static_cast<double>(n - 1) * op.trace() / static_cast<double>(D) * Mat::Identity(D, D);
  return out;
}

inline bool is_local_sum(const Mat& op, const SystemShape& shape, double tol = 1e-10) {
  return (op - local_sum_part(op, shape)).cwiseAbs().maxCoeff() <= tol * std::max(1.0, op.cwiseAbs().maxCoeff());
}

// Operator-Schmidt rank one on every single-party cut.
inline bool is_product_operator(const Mat& op, const SystemShape& shape, double tol = 1e-10) {
  if (shape.parties() < 2) return true;
  const int D = shape.total();
  std::vector<int> sq;
  for (int d : shape.dims) sq.push_back(d * d);
  const SystemShape opshape(sq);
  Vec v(static_cast<Eigen::Index>(D) * D);
  // interleave row and column index of each party into a single digit d_k*r_k + c_k
  for (int r = 0; r < D; ++r)
    for (int c = 0; c < D; ++c) {
      int rr = r, cc = c, idx = 0, mul = 1;
      for (int k = shape.parties() - 1; k >= 0; --k) {
        const int dk = shape.dim(k);
        idx += ((rr % dk) * dk + (cc % dk)) * mul;
        mul *= dk * dk;
        rr /= dk;
        cc /= dk;
      }
      v(idx) = op(r, c);
    }
  if (v.cwiseAbs().maxCoeff() == 0.0) return true;
  return product_defect(v, opshape) <= tol;
}

struct SeparabilityVerdict {
  bool manifestly_separable = false;
  bool local_hamiltonian = false;
  std::vector<bool> product_jump;
  std::vector<bool> local_LdagL;  // informational: needed for the generator-level identity, not for separability
};

inline SeparabilityVerdict check_separable_form(const LindbladModel& m, double tol = 1e-10) {
  SeparabilityVerdict v;
  v.local_hamiltonian = is_local_sum(m.H, m.shape, tol);
  bool ok = v.local_hamiltonian;
  for (const auto& L : m.L) {
    v.product_jump.push_back(is_product_operator(L, m.shape, tol));
    v.local_LdagL.push_back(is_local_sum(L.adjoint() * L, m.shape, tol));
    ok = ok && v.product_jump.back();
  }
  v.manifestly_separable = ok;
  return v;
}

struct Scenario {
  std::string name;
  std::string description;
  LindbladModel model;
  ProductState initial;
  double t_final = 3.0;
  double dt = 0.2;
  int n_traj = 600;
  std::vector<Observable> observables;
  std::vector<std::string> intermediate;  // observable names summed into "intermediate"
};

namespace detail {

inline std::vector<Observable> basis_observables(const SystemShape& s) {
  std::vector<Observable> o;
  for (const char* l : {"00", "01", "10", "11"}) o.push_back({std::string("p") + l, label_projector(l, s)});
  return o;
}

inline void add_decay_observables(Scenario& sc, const std::vector<std::string>& mid_labels) {
  const auto& s = sc.model.shape;
  sc.observables.push_back({"ground", label_projector("00", s)});
  Mat mid = Mat::Zero(4, 4);
  for (const auto& l : mid_labels) mid += label_projector(l, s);
  sc.observables.push_back({"intermediate", mid});
  sc.observables.push_back({"excited", label_projector("11", s)});
  for (const auto& l : mid_labels) {
    std::string nm = "p" + l;
    sc.observables.push_back({nm, label_projector(l, s)});
  }
}

}  // namespace detail

inline Scenario make_scenario(const std::string& name) {
  const auto& s = detail::qubits2();
  Scenario sc;
  sc.name = name;
  if (name == "bell-decay") {
    sc.description = "decay |11> -> Phi+- -> |00> through Bell intermediates, rates 9,1,1,9";
    sc.model = bell_decay_model();
    sc.initial = product_from_label("11", s);
    detail::add_decay_observables(sc, {"Phi+", "Phi-"});
  } else if (name == "product-decay") {
    sc.description = "decay |11> -> |10>,|01> -> |00>, rates 9,1,1,9";
    sc.model = product_decay_model();
    sc.initial = product_from_label("11", s);
    detail::add_decay_observables(sc, {"10", "01"});
  } else if (name == "product-decay-rotated") {
    sc.description = "product decay with L1,L3 rotated into Bell form, rates 5,1,5,9";
    sc.model = rotated_variant(product_decay_model({5.0, 1.0, 5.0, 9.0}));
    sc.initial = product_from_label("11", s);
    detail::add_decay_observables(sc, {"10", "01"});
  } else if (name == "cnot") {
    sc.description = "CNOT jump operator, initial (|0>+|1>)|0>/sqrt2";
    sc.model = cnot_model();
    const double r = 1.0 / std::sqrt(2.0);
    Vec plus(2);
    plus << r, r;
    sc.initial = ProductState(s, {plus, basis_vector(2, 0)});
    sc.n_traj = 400;
    sc.t_final = 4.0;
    sc.observables.push_back({"Psi+", label_projector("Psi+", s)});
    for (auto& o : detail::basis_observables(s)) sc.observables.push_back(o);
  } else if (name == "swap") {
    sc.description = "random exchange L = sqrt(gamma) V, gamma = 1, initial |01>";
    sc.model = swap_model(1.0);
    sc.initial = product_from_label("01", s);
    sc.t_final = 1.0;
    sc.dt = 1e-3;
    sc.n_traj = 600;
    for (auto& o : detail::basis_observables(s)) sc.observables.push_back(o);
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  return sc;
}

inline std::vector<std::string> scenario_names() {
  return {"bell-decay", "product-decay", "product-decay-rotated", "cnot", "swap"};
}

}  // namespace sepdyn
