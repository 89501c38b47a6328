#pragma once

#include "sepdyn/hilbert.hpp"
#include "sepdyn/measures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sepdyn {

struct Observable {
  std::string name;
  Mat P;  // Hermitian; value on a pure state is <psi|P|psi>/<psi|psi>
};

struct EnsembleOptions {
  int threads = 1;
  int n_batches = 20;
  bool track_negativity = true;
  int negativity_party = 0;
  std::vector<Observable> observables;
};

inline int default_threads() {
  if (const char* env = std::getenv("SEPDYN_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

struct TrajectoryCounters {
  std::vector<long> branch_counts;
  long annihilation_events = 0;
  long singular_events = 0;
};

using TrajectoryObserver = std::function<void(int, const Vec&)>;

struct EnsembleSeries {
  std::vector<double> times;
  std::vector<Mat> rho;
  std::vector<std::string> obs_names;
  std::vector<std::vector<double>> obs_mean, obs_std, obs_sem, obs_batch_sem;
  std::vector<double> neg_mean, neg_std, neg_sem, neg_of_mean, neg_of_mean_batch_sem, trace;
  int n_traj = 0;
  int n_batches = 0;
  std::vector<long> branch_counts;
  long annihilation_events = 0;
  long singular_events = 0;
};

namespace detail {

struct BatchAccumulator {
  std::vector<Mat> rho;
  std::vector<std::vector<double>> obs_sum, obs_sq;
  std::vector<double> neg_sum, neg_sq;
  TrajectoryCounters counters;
  int count = 0;
};

inline double pure_negativity(const Vec& psi, int party, const SystemShape& shape) {
  if (shape.parties() < 2) return 0.0;
  return negativity(psi * psi.adjoint() / psi.squaredNorm(), party, shape);
}

}  // namespace detail

// Runs n_traj trajectories in fixed contiguous batches; the reduction order depends only on
// the batch layout, so any thread count gives bit-identical results.
template <class TrajectoryFn>
EnsembleSeries run_trajectories(const SystemShape& shape, int steps, double tau, int n_traj,
                                const EnsembleOptions& opt, int n_branches, TrajectoryFn&& fn) {
  const int D = shape.total();
  const int T = steps + 1;
  const int B = std::max(1, std::min(opt.n_batches, n_traj));
  const std::size_t nobs = opt.observables.size();
  std::vector<detail::BatchAccumulator> acc(static_cast<std::size_t>(B));
  for (auto& a : acc) {
    a.rho.assign(static_cast<std::size_t>(T), Mat::Zero(D, D));
    a.obs_sum.assign(static_cast<std::size_t>(T), std::vector<double>(nobs, 0.0));
    a.obs_sq = a.obs_sum;
    a.neg_sum.assign(static_cast<std::size_t>(T), 0.0);
    a.neg_sq = a.neg_sum;
    a.counters.branch_counts.assign(static_cast<std::size_t>(n_branches), 0);
  }

  auto run_batch = [&](int b) {
    auto& a = acc[static_cast<std::size_t>(b)];
    const long lo = static_cast<long>(n_traj) * b / B;
    const long hi = static_cast<long>(n_traj) * (b + 1) / B;
    for (long i = lo; i < hi; ++i) {
      TrajectoryObserver observe = [&](int s, const Vec& psi) {
        const Vec u = psi / psi.norm();
        const auto ss = static_cast<std::size_t>(s);
        a.rho[ss] += u * u.adjoint();
        for (std::size_t o = 0; o < nobs; ++o) {
          const double v = std::real(u.dot(opt.observables[o].P * u));
          a.obs_sum[ss][o] += v;
          a.obs_sq[ss][o] += v * v;
        }
        if (opt.track_negativity) {
          const double ng = detail::pure_negativity(u, opt.negativity_party, shape);
          a.neg_sum[ss] += ng;
          a.neg_sq[ss] += ng * ng;
        }
      };
      fn(static_cast<std::uint64_t>(i), observe, a.counters);
      a.count += 1;
    }
  };

  const int threads = std::max(1, std::min(opt.threads, B));
  if (threads == 1) {
    for (int b = 0; b < B; ++b) run_batch(b);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int b = next++; b < B; b = next++) {
          try {
            run_batch(b);
          } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  EnsembleSeries out;
  out.n_traj = n_traj;
  out.n_batches = B;
  out.branch_counts.assign(static_cast<std::size_t>(n_branches), 0);
  for (const auto& o : opt.observables) out.obs_names.push_back(o.name);
  for (const auto& a : acc) {
    for (int k = 0; k < n_branches; ++k)
      out.branch_counts[static_cast<std::size_t>(k)] += a.counters.branch_counts[static_cast<std::size_t>(k)];
    out.annihilation_events += a.counters.annihilation_events;
    out.singular_events += a.counters.singular_events;
  }
  const double N = n_traj;
  for (int s = 0; s < T; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    out.times.push_back(s * tau);
    Mat rho = Mat::Zero(D, D);
    std::vector<double> sum(nobs, 0.0), sq(nobs, 0.0);
    double ns = 0.0, nq = 0.0;
    std::vector<std::vector<double>> batch_obs(nobs);
    std::vector<double> batch_neg;
    for (const auto& a : acc) {
      rho += a.rho[ss];
      for (std::size_t o = 0; o < nobs; ++o) {
        sum[o] += a.obs_sum[ss][o];
        sq[o] += a.obs_sq[ss][o];
        batch_obs[o].push_back(a.obs_sum[ss][o] / a.count);
      }
      ns += a.neg_sum[ss];
      nq += a.neg_sq[ss];
      if (opt.track_negativity && shape.parties() > 1)
        batch_neg.push_back(negativity(a.rho[ss] / a.count, opt.negativity_party, shape));
    }
    rho /= N;
    out.rho.push_back(rho);
    out.trace.push_back(std::real(rho.trace()));

    auto stdev = [](double s1, double s2, double n) {
      if (n < 2) return 0.0;
      const double m = s1 / n;
      return std::sqrt(std::max(0.0, (s2 - n * m * m) / (n - 1)));
    };
    auto batch_sem = [](const std::vector<double>& v) {
      const double n = static_cast<double>(v.size());
      if (n < 2) return 0.0;
      double m = 0.0;
      for (double x : v) m += x;
      m /= n;
      double q = 0.0;
      for (double x : v) q += (x - m) * (x - m);
      return std::sqrt(q / (n - 1) / n);
    };
    std::vector<double> om, os, oe, ob;
    for (std::size_t o = 0; o < nobs; ++o) {
      om.push_back(sum[o] / N);
      os.push_back(stdev(sum[o], sq[o], N));
      oe.push_back(os.back() / std::sqrt(N));
      ob.push_back(batch_sem(batch_obs[o]));
    }
    out.obs_mean.push_back(om);
    out.obs_std.push_back(os);
    out.obs_sem.push_back(oe);
    out.obs_batch_sem.push_back(ob);
    out.neg_mean.push_back(ns / N);
    out.neg_std.push_back(stdev(ns, nq, N));
    out.neg_sem.push_back(out.neg_std.back() / std::sqrt(N));
    out.neg_of_mean.push_back(shape.parties() > 1 && opt.track_negativity
                                  ? negativity(rho, opt.negativity_party, shape)
                                  : 0.0);
    out.neg_of_mean_batch_sem.push_back(batch_sem(batch_neg));
  }
  return out;
}

}  // namespace sepdyn
