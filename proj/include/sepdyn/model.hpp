#pragma once

#include "sepdyn/hilbert.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepdyn {

struct LindbladModel {
  SystemShape shape;
  Mat H;
  std::vector<Mat> L;
  std::vector<std::string> labels;  // one per Lindblad operator, e.g. "gamma_11->Phi+"
  std::vector<double> rates;        // informational; empty when not rate-parametrised
  std::string name;

  LindbladModel() = default;

  LindbladModel(SystemShape s, Mat h, std::vector<Mat> ls, std::vector<std::string> labs = {},
                std::vector<double> rs = {}, std::string nm = {})
      : shape(std::move(s)), H(std::move(h)), name(std::move(nm)) {
    const int D = shape.total();
    if (H.rows() != D || H.cols() != D) throw std::invalid_argument("LindbladModel: H has wrong dimension");
    if (hermiticity_defect(H) > 1e-10) throw std::invalid_argument("LindbladModel: H is not Hermitian");
    if (labs.empty())
      for (std::size_t a = 0; a < ls.size(); ++a) labs.push_back("L" + std::to_string(a + 1));
    if (labs.size() != ls.size()) throw std::invalid_argument("LindbladModel: label count mismatch");
    const bool keep_rates = rs.size() == ls.size();
    for (std::size_t a = 0; a < ls.size(); ++a) {
      if (ls[a].rows() != D || ls[a].cols() != D)
        throw std::invalid_argument("LindbladModel: Lindblad operator " + labs[a] + " has wrong dimension");
      if (ls[a].cwiseAbs().maxCoeff() == 0.0) {
        std::cerr << "warning: dropping zero Lindblad operator " << labs[a] << "\n";
        continue;
      }
      L.push_back(ls[a]);
      labels.push_back(labs[a]);
      if (keep_rates) rates.push_back(rs[a]);
    }
    if (!keep_rates) rates = std::move(rs);
  }

  int dim() const { return shape.total(); }
  int channels() const { return static_cast<int>(L.size()); }

  Mat sum_LdagL() const {
    Mat s = Mat::Zero(dim(), dim());
    for (const auto& l : L) s += l.adjoint() * l;
    return s;
  }
};

struct KrausSet {
  double tau = 0.0;
  std::vector<Mat> K;  // K[0] no-jump, K[a] for channel a
};

inline KrausSet build_kraus(const LindbladModel& m, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("build_kraus: tau must be positive");
  KrausSet ks;
  ks.tau = tau;
  const int D = m.dim();
  ks.K.push_back(Mat::Identity(D, D) + tau * (-I * m.H - 0.5 * m.sum_LdagL()));
  for (const auto& l : m.L) ks.K.push_back(std::sqrt(tau) * l);
  return ks;
}

// H -> H + sum(conj(l) L - l L^dag)/(2i), L -> l*1 + L.
inline LindbladModel gauge_transform(const LindbladModel& m, const std::vector<cplx>& lambdas) {
  if (lambdas.size() != m.L.size()) throw std::invalid_argument("gauge_transform: need one lambda per channel");
  LindbladModel out = m;
  const int D = m.dim();
  for (std::size_t a = 0; a < m.L.size(); ++a) {
    out.H += (std::conj(lambdas[a]) * m.L[a] - lambdas[a] * m.L[a].adjoint()) / (2.0 * I);
    out.L[a] = lambdas[a] * Mat::Identity(D, D) + m.L[a];
  }
  out.H = 0.5 * (out.H + out.H.adjoint());
  return out;
}

struct PerturbationForm {
  double tau = 0.0;
  double epsilon = 0.0;
  Mat G;
  std::vector<cplx> mus;  // mus[0] == 1
  std::vector<Mat> fs;    // fs[0] == G/||G||, fs[a] == L^a/||L^a||
  std::vector<cplx> lambdas;

  // K^b = mu^b (1 + epsilon F^b)
  std::vector<Mat> reconstruct() const {
    std::vector<Mat> ks;
    const auto D = G.rows();
    for (std::size_t b = 0; b < fs.size(); ++b)
      ks.push_back(mus[b] * (Mat::Identity(D, D) + epsilon * fs[b]));
    return ks;
  }
};

inline Mat perturbation_generator(const LindbladModel& m, const std::vector<cplx>& lambdas) {
  const int D = m.dim();
  Mat G = -I * m.H;
  for (std::size_t a = 0; a < m.L.size(); ++a) {
    const cplx l = lambdas[a];
    G -= 0.5 * (std::norm(l) * Mat::Identity(D, D) + 2.0 * std::conj(l) * m.L[a] + m.L[a].adjoint() * m.L[a]);
  }
  return G;
}

inline PerturbationForm perturbation_form(const LindbladModel& m, double tau, const std::vector<cplx>& lambdas) {
  if (!(tau > 0.0)) throw std::invalid_argument("perturbation_form: tau must be positive");
  if (lambdas.size() != m.L.size()) throw std::invalid_argument("perturbation_form: need one lambda per channel");
  PerturbationForm pf;
  pf.tau = tau;
  pf.lambdas = lambdas;
  pf.G = perturbation_generator(m, lambdas);
  const double g = operator_norm(pf.G);
  if (g == 0.0) throw std::domain_error("perturbation_form: G = 0, the model has no dynamics");
  pf.epsilon = tau * g;
  pf.mus.push_back(1.0);
  pf.fs.push_back(pf.G / g);
  for (std::size_t a = 0; a < m.L.size(); ++a) {
    pf.mus.push_back(std::sqrt(tau) * lambdas[a]);
    pf.fs.push_back(m.L[a] / operator_norm(m.L[a]));
  }
  return pf;
}

// Self-consistent lambda^a = ||L^a|| / epsilon with epsilon = tau ||G(lambda)||.
inline std::vector<cplx> consistent_lambdas(const LindbladModel& m, double tau, int max_iter = 500) {
  std::vector<cplx> lam(m.L.size(), 0.0);
  std::vector<double> norms;
  for (const auto& l : m.L) norms.push_back(operator_norm(l));
  double eps = tau * operator_norm(perturbation_generator(m, lam));
  if (eps == 0.0) eps = tau;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t a = 0; a < lam.size(); ++a) lam[a] = norms[a] / eps;
    const double next = tau * operator_norm(perturbation_generator(m, lam));
    if (std::abs(next - eps) <= 1e-15 * std::max(1.0, eps)) {
      eps = next;
      break;
    }
    eps = 0.5 * (eps + next);
  }
  for (std::size_t a = 0; a < lam.size(); ++a) lam[a] = norms[a] / eps;
  return lam;
}

inline Mat effective_hamiltonian(const LindbladModel& m) { return m.H - 0.5 * I * m.sum_LdagL(); }

}  // namespace sepdyn
