#pragma once

#include "sepdyn/ensemble.hpp"
#include "sepdyn/hilbert.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sepdyn {

struct BranchDistribution {
  std::vector<double> branch_norms;
  double q_total = 0.0;
  std::vector<double> probabilities;
};

struct Jump {
  double time;
  int branch;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Jump> jump_record;
};

inline std::pair<std::vector<Vec>, BranchDistribution> branch_states(const Vec& psi, const KrausSet& ks) {
  std::vector<Vec> phis;
  BranchDistribution bd;
  for (const auto& K : ks.K) {
    phis.push_back(K * psi);
    bd.branch_norms.push_back(phis.back().squaredNorm());
    bd.q_total += bd.branch_norms.back();
  }
  if (!(bd.q_total > 1e-300)) throw std::runtime_error("branch_states: state annihilated by every branch");
  for (double w : bd.branch_norms) bd.probabilities.push_back(w / bd.q_total);
  return {std::move(phis), std::move(bd)};
}

// One Kraus step; `branch` receives the sampled index.
inline Vec mcwf_step(const Vec& psi, const KrausSet& ks, Rng& rng, int* branch = nullptr) {
  auto [phis, bd] = branch_states(psi, ks);
  const int b = sample_index(bd.branch_norms, rng.uniform());
  if (branch) *branch = b;
  return phis[static_cast<std::size_t>(b)] / std::sqrt(bd.branch_norms[static_cast<std::size_t>(b)]);
}

inline int step_count(double t_final, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
  if (t_final < 0.0) throw std::invalid_argument("t_final must be non-negative");
  return static_cast<int>(std::llround(t_final / tau));
}

inline Trajectory run_trajectory(const LindbladModel& m, const Vec& psi0, double t_final, double tau,
                                 std::uint64_t master_seed, std::uint64_t index = 0) {
  const auto ks = build_kraus(m, tau);
  const int steps = step_count(t_final, tau);
  Rng rng(master_seed, index);
  Trajectory tr;
  Vec psi = psi0 / psi0.norm();
  tr.times.push_back(0.0);
  tr.states.push_back(psi);
  for (int s = 0; s < steps; ++s) {
    int b = 0;
    psi = mcwf_step(psi, ks, rng, &b);
    const double t = (s + 1) * tau;
    if (b != 0) tr.jump_record.push_back({t, b});
    tr.times.push_back(t);
    tr.states.push_back(psi);
  }
  return tr;
}

inline EnsembleSeries run_ensemble(const LindbladModel& m, const Vec& psi0, double t_final, double tau,
                                   int n_traj, std::uint64_t master_seed, const EnsembleOptions& opt = {}) {
  if (n_traj < 1) throw std::invalid_argument("run_ensemble: n_traj must be >= 1");
  if (psi0.size() != m.dim()) throw std::invalid_argument("run_ensemble: initial state has wrong dimension");
  const auto ks = build_kraus(m, tau);
  const int steps = step_count(t_final, tau);
  const Vec start = psi0 / psi0.norm();
  return run_trajectories(
      m.shape, steps, tau, n_traj, opt, m.channels() + 1,
      [&](std::uint64_t index, const TrajectoryObserver& observe, TrajectoryCounters& cnt) {
        Rng rng(master_seed, index);
        Vec psi = start;
        observe(0, psi);
        for (int s = 0; s < steps; ++s) {
          int b = 0;
          psi = mcwf_step(psi, ks, rng, &b);
          cnt.branch_counts[static_cast<std::size_t>(b)] += 1;
          observe(s + 1, psi);
        }
      });
}

}  // namespace sepdyn
