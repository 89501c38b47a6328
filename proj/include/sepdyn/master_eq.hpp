#pragma once

#include "sepdyn/hilbert.hpp"
#include "sepdyn/measures.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/rng.hpp"
#include "sepdyn/sep_mcwf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepdyn {

inline Mat lindblad_rhs(const Mat& rho, const LindbladModel& m) {
  Mat out = I * (rho * m.H - m.H * rho);
  for (const auto& L : m.L) {
    const Mat LdL = L.adjoint() * L;
    out += L * rho * L.adjoint() - 0.5 * (LdL * rho + rho * LdL);
  }
  return out;
}

enum class Method { euler, rk4 };

struct DensitySeries {
  std::vector<double> times;
  std::vector<Mat> rho;
};

inline DensitySeries integrate(const LindbladModel& m, const Mat& rho0, double t_final, double dt,
                               Method method = Method::rk4, double positivity_tol = 1e-8) {
  const int steps = step_count(t_final, dt);
  DensitySeries out;
  Mat rho = rho0;
  out.times.push_back(0.0);
  out.rho.push_back(rho);
  for (int s = 0; s < steps; ++s) {
    if (method == Method::euler) {
      rho = rho + dt * lindblad_rhs(rho, m);
    } else {
      const Mat k1 = lindblad_rhs(rho, m);
      const Mat k2 = lindblad_rhs(rho + 0.5 * dt * k1, m);
      const Mat k3 = lindblad_rhs(rho + 0.5 * dt * k2, m);
      const Mat k4 = lindblad_rhs(rho + dt * k3, m);
      rho = rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    rho = 0.5 * (rho + rho.adjoint());
    const double lmin = hermitian_eigenvalues(rho, 1e-6).front();
    if (lmin < -positivity_tol) {
      std::ostringstream os;
      os << "integrate: positivity breach at t=" << (s + 1) * dt << " (min eigenvalue " << lmin
         << "); reduce dt";
      throw std::runtime_error(os.str());
    }
    out.times.push_back((s + 1) * dt);
    out.rho.push_back(rho);
  }
  return out;
}

struct GeneratorOutput {
  Mat drift;                          // traceless d rho/dt at the pure product state
  Mat unnormalized;                   // the generator before removing its trace
  std::vector<BranchOutcome> jumps;   // restricted jump outcomes; weight = rate
  ProductState psi;                   // normalized input
  std::vector<Mat> h_eff_local;       // (H_eff)_k
  double mean_LdagL = 0.0;            // <sum_a L^a^dag L^a>
  int singular = 0;
  int annihilated = 0;
};

inline GeneratorOutput sep_generator(const ProductState& psi_in, const LindbladModel& m, const SepOptions& opt = {}) {
  if (psi_in.shape != m.shape) throw std::invalid_argument("sep_generator: shape mismatch");
  GeneratorOutput g;
  g.psi = psi_in.normalized();
  const int n = g.psi.parties();
  const SystemShape& sh = m.shape;
  const Vec v = g.psi.full();
  const Mat rho = v * v.adjoint();
  const Mat LdL = m.sum_LdagL();
  const Mat Heff = effective_hamiltonian(m);
  const double mean_LdL = std::real(mean_value(LdL, g.psi));
  g.mean_LdagL = mean_LdL;

  Mat L = Mat::Zero(sh.total(), sh.total());
  for (int k = 0; k < n; ++k) {
    const Mat Hk = embed_local(partially_reduce(m.H, g.psi, k), k, sh);
    const Mat Ak = embed_local(partially_reduce(LdL, g.psi, k), k, sh);
    g.h_eff_local.push_back(partially_reduce(Heff, g.psi, k));
    L += I * (rho * Hk - Hk * rho) - 0.5 * (Ak * rho + rho * Ak);
  }
  L += (n - 1) * mean_LdL * rho;
  auto rb = restricted_outcomes(g.psi, m.L, opt);
  for (auto& o : rb.outcomes) {
    const Vec u = o.state.full();
    L += o.weight * u * u.adjoint() / u.squaredNorm();
    o.channel += 1;
    g.jumps.push_back(o);
  }
  g.singular = rb.singular;
  g.annihilated = rb.annihilated;
  g.unnormalized = L;
  g.drift = L - L.trace() * rho;
  return g;
}

inline double total_rate(const GeneratorOutput& g) {
  double r = 0.0;
  for (const auto& j : g.jumps) r += j.weight;
  return r;
}

// Factor k of the drift-only step: 1 - i tau (H_eff)_k + tau <sum L^dag L>/2. Each factor loses norm
// at rate <sum L^dag L>, so every factor carries its own counterterm; for one party this is the SSE step.
inline Mat no_jump_factor(const GeneratorOutput& g, int k, double tau) {
  const int dk = g.psi.shape.dim(k);
  return (1.0 + 0.5 * tau * g.mean_LdagL) * Mat::Identity(dk, dk) - I * tau * g.h_eff_local[static_cast<std::size_t>(k)];
}

inline ProductState no_jump_state(const GeneratorOutput& g, double tau) {
  ProductState p = g.psi;
  for (int k = 0; k < p.parties(); ++k) p[k] = no_jump_factor(g, k, tau) * g.psi[k];
  return p.normalized();
}

struct WeightedProduct {
  double weight;
  ProductState state;
};

using SeparableEnsemble = std::vector<WeightedProduct>;

// Members whose projectors sum to rho + tau * drift up to O(tau^2).
inline SeparableEnsemble sep_decompose(const ProductState& psi, const LindbladModel& m, double tau,
                                       const SepOptions& opt = {}) {
  const auto g = sep_generator(psi, m, opt);
  const double stay = 1.0 - tau * total_rate(g);
  if (stay < 0.0) throw std::runtime_error("sep_decompose: tau too large for the jump rates");
  SeparableEnsemble out;
  out.push_back({stay, no_jump_state(g, tau)});
  for (const auto& j : g.jumps) out.push_back({tau * j.weight, j.state.normalized()});
  return out;
}

inline Mat ensemble_density(const SeparableEnsemble& e) {
  const int D = e.front().state.shape.total();
  Mat rho = Mat::Zero(D, D);
  for (const auto& w : e) {
    const Vec v = w.state.full();
    rho += w.weight * v * v.adjoint() / v.squaredNorm();
  }
  return rho;
}

struct PiecewiseOptions {
  double prune_weight = 1e-8;
  double merge_infidelity = 1e-10;
  std::size_t max_members = 10000;
  std::uint64_t seed = 0;
  bool keep_members = true;
  SepOptions sep;
};

struct PiecewiseFrame {
  double time;
  Mat rho;
  SeparableEnsemble members;  // empty unless keep_members
  std::size_t member_count;
};

namespace detail {

// Factors scaled to unit norm with the largest-magnitude entry real and positive.
inline ProductState canonical(const ProductState& p) {
  ProductState c = p.normalized();
  for (auto& f : c.factors) {
    Eigen::Index j = 0;
    f.cwiseAbs().maxCoeff(&j);
    f *= std::conj(f(j)) / std::abs(f(j));
  }
  return c;
}

inline std::string state_key(const ProductState& c) {
  std::ostringstream os;
  os.precision(8);
  for (const auto& f : c.factors)
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double re = std::round(f(i).real() * 1e7) / 1e7;
      const double im = std::round(f(i).imag() * 1e7) / 1e7;
      os << (re == 0.0 ? 0.0 : re) << ',' << (im == 0.0 ? 0.0 : im) << ';';
    }
  return os.str();
}

inline double product_fidelity(const ProductState& a, const ProductState& b) {
  double f = 1.0;
  for (int k = 0; k < a.parties(); ++k) f *= std::norm(a[k].dot(b[k])) / (a[k].squaredNorm() * b[k].squaredNorm());
  return f;
}

inline SeparableEnsemble consolidate(SeparableEnsemble in, const PiecewiseOptions& opt, Rng& rng) {
  std::map<std::string, std::vector<std::size_t>> buckets;
  SeparableEnsemble merged;
  for (auto& w : in) {
    if (!(w.weight > 0.0)) continue;
    ProductState c = canonical(w.state);
    auto& idx = buckets[state_key(c)];
    bool done = false;
    for (std::size_t j : idx)
      if (1.0 - product_fidelity(merged[j].state, c) <= opt.merge_infidelity) {
        merged[j].weight += w.weight;
        done = true;
        break;
      }
    if (!done) {
      idx.push_back(merged.size());
      merged.push_back({w.weight, std::move(c)});
    }
  }
  double total = 0.0;
  for (const auto& w : merged) total += w.weight;
  SeparableEnsemble kept;
  for (auto& w : merged)
    if (w.weight / total >= opt.prune_weight) kept.push_back(std::move(w));
  total = 0.0;
  for (const auto& w : kept) total += w.weight;
  for (auto& w : kept) w.weight /= total;
  std::stable_sort(kept.begin(), kept.end(), [](const WeightedProduct& a, const WeightedProduct& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return state_key(a.state) < state_key(b.state);
  });
  if (kept.size() > opt.max_members) {
    // systematic resampling down to the cap, equal weights
    const std::size_t N = opt.max_members;
    SeparableEnsemble res;
    const double u0 = rng.uniform() / static_cast<double>(N);
    double acc = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const double target = u0 + static_cast<double>(i) / static_cast<double>(N);
      while (j + 1 < kept.size() && acc + kept[j].weight <= target) acc += kept[j++].weight;
      res.push_back({1.0 / static_cast<double>(N), kept[j].state});
    }
    PiecewiseOptions again = opt;
    again.max_members = N;
    again.prune_weight = 0.0;
    return consolidate(std::move(res), again, rng);
  }
  return kept;
}

}  // namespace detail

inline std::vector<PiecewiseFrame> sep_piecewise_propagate(const SeparableEnsemble& ensemble, const LindbladModel& m,
                                                           double t_final, double tau,
                                                           const PiecewiseOptions& opt = {}) {
  if (ensemble.empty()) throw std::invalid_argument("sep_piecewise_propagate: empty ensemble");
  const int steps = step_count(t_final, tau);
  Rng rng(opt.seed, 0);
  SeparableEnsemble cur = detail::consolidate(ensemble, opt, rng);
  std::vector<PiecewiseFrame> out;
  auto record = [&](double t) {
    PiecewiseFrame f{t, ensemble_density(cur), {}, cur.size()};
    if (opt.keep_members) f.members = cur;
    out.push_back(std::move(f));
  };
  record(0.0);
  for (int s = 0; s < steps; ++s) {
    SeparableEnsemble next;
    for (const auto& w : cur)
      for (auto& c : sep_decompose(w.state, m, tau, opt.sep)) next.push_back({w.weight * c.weight, std::move(c.state)});
    cur = detail::consolidate(std::move(next), opt, rng);
    record((s + 1) * tau);
  }
  return out;
}

}  // namespace sepdyn
