#pragma once

#include "sepdyn/hilbert.hpp"
#include "sepdyn/master_eq.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/rng.hpp"
#include "sepdyn/sep_mcwf.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sepdyn {

struct JumpIncrement {
  double time = 0.0;
  int channel = -1;  // -1: no jump; otherwise the Lindblad index a (0-based)

  int dN(int a) const { return channel == a ? 1 : 0; }
};

namespace detail {

// One uniform variate split into consecutive intervals of length rate_j*dt, then the no-jump rest.
inline int poisson_pick(const std::vector<double>& rates, double dt, double u) {
  double total = 0.0;
  for (double r : rates) total += r * dt;
  if (total >= 1.0) throw std::runtime_error("stochastic step: total jump probability >= 1, reduce dt");
  double acc = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (rates[j] <= 0.0) continue;
    acc += rates[j] * dt;
    if (u < acc) return static_cast<int>(j);
  }
  return -1;
}

inline Mat pure_state_vector_check(const Mat& sigma) {
  const double tr = std::real(sigma.trace());
  const double purity = std::real((sigma * sigma).trace()) / (tr * tr);
  if (std::abs(purity - 1.0) > 1e-10) throw std::invalid_argument("stochastic step: sigma is not pure");
  return sigma / tr;
}

inline Vec dominant_vector(const Mat& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (sigma + sigma.adjoint()));
  return es.eigenvectors().col(es.eigenvectors().cols() - 1);
}

}  // namespace detail

inline Vec sse_step(const Vec& psi_in, const LindbladModel& m, double dt, Rng& rng, JumpIncrement* inc = nullptr) {
  const Vec psi = psi_in / psi_in.norm();
  std::vector<double> rates;
  for (const auto& L : m.L) rates.push_back((L * psi).squaredNorm());
  const int a = detail::poisson_pick(rates, dt, rng.uniform());
  if (inc) inc->channel = a;
  if (a >= 0) {
    const Vec out = m.L[static_cast<std::size_t>(a)] * psi;
    return out / std::sqrt(rates[static_cast<std::size_t>(a)]);
  }
  double half = 0.0;
  for (double r : rates) half += 0.5 * r;
  const Vec out = psi + dt * (-I * (effective_hamiltonian(m) * psi) + half * psi);
  return out / out.norm();
}

// The no-jump update is applied as A sigma A^dag / tr(...) with A = 1 + dt(-i H_eff + sum<L^dag L>/2),
// which equals the projector of sse_step and keeps sigma pure.
inline Mat svn_step(const Mat& sigma_in, const LindbladModel& m, double dt, Rng& rng, JumpIncrement* inc = nullptr) {
  const Mat sigma = detail::pure_state_vector_check(sigma_in);
  std::vector<double> rates;
  for (const auto& L : m.L) rates.push_back(std::real((L * sigma * L.adjoint()).trace()));
  const int a = detail::poisson_pick(rates, dt, rng.uniform());
  if (inc) inc->channel = a;
  Mat out;
  if (a >= 0) {
    const Mat& L = m.L[static_cast<std::size_t>(a)];
    out = L * sigma * L.adjoint() / rates[static_cast<std::size_t>(a)];
  } else {
    double half = 0.0;
    for (double r : rates) half += 0.5 * r;
    const int D = m.dim();
    const Mat A = Mat::Identity(D, D) + dt * (-I * effective_hamiltonian(m) + half * Mat::Identity(D, D));
    out = A * sigma * A.adjoint();
  }
  out /= std::real(out.trace());
  return 0.5 * (out + out.adjoint());
}

// Jump rates are the restricted outcome weights of the Lindblad operators, so that the mean
// increment reproduces the separable generator.
inline ProductState sep_sse_step(const ProductState& psi_in, const LindbladModel& m, double dt, Rng& rng,
                                 JumpIncrement* inc = nullptr, const SepOptions& opt = {}) {
  const auto g = sep_generator(psi_in, m, opt);
  std::vector<double> rates;
  for (const auto& j : g.jumps) rates.push_back(j.weight);
  const int pick = detail::poisson_pick(rates, dt, rng.uniform());
  if (pick >= 0) {
    if (inc) inc->channel = g.jumps[static_cast<std::size_t>(pick)].channel - 1;
    return g.jumps[static_cast<std::size_t>(pick)].state.normalized();
  }
  if (inc) inc->channel = -1;
  return no_jump_state(g, dt);
}

inline ProductState product_state_of(const Mat& sigma, const SystemShape& shape) {
  const Vec v = detail::dominant_vector(sigma);
  auto p = as_product(v, shape, 1e-8);
  if (!p) throw std::invalid_argument("sep_svn_step: sigma is not a product state");
  return p->normalized();
}

inline Mat sep_svn_step(const Mat& sigma_in, const LindbladModel& m, double dt, Rng& rng,
                        JumpIncrement* inc = nullptr, const SepOptions& opt = {}) {
  const Mat sigma = detail::pure_state_vector_check(sigma_in);
  const ProductState psi = product_state_of(sigma, m.shape);
  const auto g = sep_generator(psi, m, opt);
  std::vector<double> rates;
  for (const auto& j : g.jumps) rates.push_back(j.weight);
  const int pick = detail::poisson_pick(rates, dt, rng.uniform());
  Mat out;
  if (pick >= 0) {
    if (inc) inc->channel = g.jumps[static_cast<std::size_t>(pick)].channel - 1;
    const Vec u = g.jumps[static_cast<std::size_t>(pick)].state.full();
    out = u * u.adjoint();
  } else {
    if (inc) inc->channel = -1;
    std::vector<Mat> A;
    for (int k = 0; k < psi.parties(); ++k) A.push_back(no_jump_factor(g, k, dt));
    const Mat Af = tensor_product(A);
    out = Af * sigma * Af.adjoint();
  }
  out /= std::real(out.trace());
  return 0.5 * (out + out.adjoint());
}

}  // namespace sepdyn
