#pragma once

#include "sepdyn/ensemble.hpp"
#include "sepdyn/hilbert.hpp"
#include "sepdyn/mcwf.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepdyn {

struct ProductState {
  SystemShape shape;
  std::vector<Vec> factors;

  ProductState() = default;
  ProductState(SystemShape s, std::vector<Vec> f) : shape(std::move(s)), factors(std::move(f)) {
    if (static_cast<int>(factors.size()) != shape.parties())
      throw std::invalid_argument("ProductState: need one factor per party");
    for (int k = 0; k < shape.parties(); ++k)
      if (factors[static_cast<std::size_t>(k)].size() != shape.dim(k))
        throw std::invalid_argument("ProductState: factor " + std::to_string(k) + " has wrong dimension");
  }

  int parties() const { return shape.parties(); }
  const Vec& operator[](int k) const { return factors[static_cast<std::size_t>(k)]; }
  Vec& operator[](int k) { return factors[static_cast<std::size_t>(k)]; }

  Vec full() const { return tensor_product(factors); }

  double norm() const {
    double n = 1.0;
    for (const auto& f : factors) n *= f.norm();
    return n;
  }

  // Every factor scaled to unit norm.
  ProductState normalized() const {
    ProductState p = *this;
    for (auto& f : p.factors) {
      const double n = std::sqrt(f.squaredNorm());
      if (!(n > 1e-300)) throw std::domain_error("ProductState: zero factor");
      f /= n;
    }
    return p;
  }
};

inline ProductState product_from_label(const std::string& digits, const SystemShape& shape) {
  if (static_cast<int>(digits.size()) != shape.parties())
    throw std::invalid_argument("product_from_label: label length must equal the number of parties");
  std::vector<Vec> f;
  for (int k = 0; k < shape.parties(); ++k)
    f.push_back(basis_vector(shape.dim(k), digits[static_cast<std::size_t>(k)] - '0'));
  return {shape, f};
}

// Columns: |psi_1 .. e_j .. psi_n> for j over the local basis of party k.
inline Mat bystander_frame(const ProductState& psi, int k) {
  const int dk = psi.shape.dim(k);
  Mat W(psi.shape.total(), dk);
  std::vector<Vec> f = psi.factors;
  for (int j = 0; j < dk; ++j) {
    f[static_cast<std::size_t>(k)] = basis_vector(dk, j);
    W.col(j) = tensor_product(f);
  }
  return W;
}

inline Mat partially_reduce(const Mat& op, const ProductState& psi, int k) {
  if (k < 0 || k >= psi.parties()) throw std::out_of_range("partially_reduce: party out of range");
  if (op.rows() != psi.shape.total() || op.cols() != psi.shape.total())
    throw std::invalid_argument("partially_reduce: operator dimension mismatch");
  double others = 1.0;
  for (int l = 0; l < psi.parties(); ++l) {
    if (l == k) continue;
    const double n2 = psi[l].squaredNorm();
    if (!(std::sqrt(n2) > 1e-12)) throw std::domain_error("partially_reduce: vanishing bystander factor");
    others *= n2;
  }
  const Mat W = bystander_frame(psi, k);
  return W.adjoint() * op * W / others;
}

inline cplx mean_value(const Mat& op, const ProductState& psi) {
  const Vec v = psi.full();
  const double n2 = v.squaredNorm();
  if (!(n2 > 0.0)) throw std::domain_error("mean_value: zero-norm state");
  return v.dot(op * v) / n2;
}

// Rows: local index of party k; columns: remaining parties in order.
inline Mat party_matrix(const Vec& v, const SystemShape& shape, int k) {
  const int dk = shape.dim(k);
  const int rest = shape.total() / dk;
  const int stride = shape.stride(k);
  Mat M(dk, rest);
  for (int idx = 0; idx < shape.total(); ++idx) {
    const int hi = idx / (stride * dk);
    const int j = (idx / stride) % dk;
    const int lo = idx % stride;
    M(j, hi * stride + lo) = v(idx);
  }
  return M;
}

// Largest relative second Schmidt coefficient over all single-party cuts; 0 for products.
inline double product_defect(const Vec& v, const SystemShape& shape) {
  double worst = 0.0;
  if (shape.parties() < 2) return 0.0;
  for (int k = 0; k < shape.parties(); ++k) {
    Eigen::JacobiSVD<Mat> svd(party_matrix(v, shape, k));
    const auto& s = svd.singularValues();
    if (!(s(0) > 0.0)) return 0.0;
    if (s.size() > 1) worst = std::max(worst, s(1) / s(0));
  }
  return worst;
}

inline std::optional<ProductState> as_product(const Vec& v, const SystemShape& shape, double tol = 1e-10) {
  if (v.size() != shape.total()) throw std::invalid_argument("as_product: dimension mismatch");
  if (!(v.squaredNorm() > 0.0)) return std::nullopt;
  if (shape.parties() == 1) return ProductState(shape, {v});
  std::vector<Vec> f;
  for (int k = 0; k < shape.parties(); ++k) {
    Eigen::JacobiSVD<Mat> svd(party_matrix(v, shape, k), Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    if (s.size() > 1 && s(1) > tol * s(0)) return std::nullopt;
    f.push_back(svd.matrixU().col(0));
  }
  const cplx c = tensor_product(f).dot(v);
  f[0] *= c;
  return ProductState(shape, f);
}

enum class Weighting { restricted, unrestricted };

struct SepOptions {
  Weighting weighting = Weighting::restricted;
  double singular_tol = 1e-10;  // |<K>| below this fraction of ||K psi|| counts as singular
  double product_tol = 1e-10;   // relative second Schmidt coefficient for a product branch
};

enum class BranchKind { regular, product, singular, annihilated };

struct ReducedKrausBranch {
  int b = 0;
  std::vector<Mat> local_ops;
  cplx mean = 0.0;
  double weight_norm = 0.0;  // squared norm of the restricted branch vector
  double full_norm = 0.0;    // squared norm of the unrestricted branch vector
  BranchKind kind = BranchKind::annihilated;
  ProductState output;
};

// psi must have unit-norm factors.
inline ReducedKrausBranch restricted_branch(const ProductState& psi, const Mat& K, int b,
                                            const SepOptions& opt = {}) {
  ReducedKrausBranch br;
  br.b = b;
  const int n = psi.parties();
  const Vec v = psi.full();
  const Vec kv = K * v;
  br.full_norm = kv.squaredNorm();
  br.mean = v.dot(kv);
  for (int k = 0; k < n; ++k) br.local_ops.push_back(partially_reduce(K, psi, k));
  if (!(std::sqrt(br.full_norm) > 1e-14 * std::max(1.0, K.norm()))) {
    br.kind = BranchKind::annihilated;
    return br;
  }
  if (auto p = as_product(kv, psi.shape, opt.product_tol)) {
    br.kind = BranchKind::product;
    br.output = *p;
    br.weight_norm = br.full_norm;
    return br;
  }
  if (std::abs(br.mean) > opt.singular_tol * std::sqrt(br.full_norm)) {
    br.kind = BranchKind::regular;
    std::vector<Vec> f;
    double w = 1.0;
    for (int k = 0; k < n; ++k) {
      f.push_back(br.local_ops[static_cast<std::size_t>(k)] * psi[k]);
      w *= f.back().squaredNorm();
    }
    w /= std::pow(std::norm(br.mean), n - 1);
    f[0] /= std::pow(br.mean, n - 1);
    br.output = ProductState(psi.shape, f);
    br.weight_norm = w;
    return br;
  }
  br.kind = BranchKind::singular;
  return br;
}

struct BranchOutcome {
  double weight = 0.0;
  ProductState state;
  int channel = 0;
};

struct RestrictedBranching {
  std::vector<ReducedKrausBranch> branches;
  std::vector<BranchOutcome> outcomes;
  int singular = 0;     // branches handled by the joint tangent decomposition
  int annihilated = 0;  // nonzero unrestricted branches left without restricted weight
};

namespace detail {

// Separable part of the tangential ensemble sum_b |t^b><t^b| of branches with vanishing mean,
// where t^b = sum_k |psi_1 .. x_k^b .. psi_n> and x_k^b is orthogonal to psi_k.
inline std::vector<BranchOutcome> singular_outcomes(const ProductState& psi,
                                                    const std::vector<const ReducedKrausBranch*>& sing) {
  const int n = psi.parties();
  std::vector<std::vector<Vec>> x(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int dk = psi.shape.dim(k);
    const Mat Q = Mat::Identity(dk, dk) - psi[k] * psi[k].adjoint();
    for (const auto* br : sing) x[static_cast<std::size_t>(k)].push_back(Q * (br->local_ops[static_cast<std::size_t>(k)] * psi[k]));
  }
  std::vector<BranchOutcome> out;
  double scale = 0.0;
  for (const auto* br : sing) scale += br->full_norm;
  for (int k = 0; k < n; ++k) {
    const int dk = psi.shape.dim(k);
    const auto& xk = x[static_cast<std::size_t>(k)];
    Mat A = Mat::Zero(dk, dk);
    for (const auto& xv : xk) A += xv * xv.adjoint();
    for (int l = 0; l < n; ++l) {
      if (l == k) continue;
      const auto& xl = x[static_cast<std::size_t>(l)];
      Mat C = Mat::Zero(dk, psi.shape.dim(l));
      for (std::size_t b = 0; b < xk.size(); ++b) C += xk[b] * xl[b].adjoint();
      A -= psd_sqrt(C * C.adjoint());
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.adjoint()));
    for (int j = 0; j < dk; ++j) {
      const double e = es.eigenvalues()(j);
      if (!(e > 1e-13 * std::max(scale, 1e-300))) continue;
      const Vec ev = es.eigenvectors().col(j);
      ProductState st = psi;
      st[k] = ev;
      int best = 0;
      double bestv = -1.0;
      for (std::size_t b = 0; b < xk.size(); ++b) {
        const double c = std::norm(ev.dot(xk[b]));
        if (c > bestv) {
          bestv = c;
          best = sing[b]->b;
        }
      }
      out.push_back({e, st, best});
    }
  }
  return out;
}

}  // namespace detail

// Restricted outcomes of the operator list `ops` (Kraus operators, or Lindblad operators for rates).
inline RestrictedBranching restricted_outcomes(const ProductState& psi_in, const std::vector<Mat>& ops,
                                               const SepOptions& opt = {}) {
  const ProductState psi = psi_in.normalized();
  RestrictedBranching rb;
  std::vector<const ReducedKrausBranch*> sing;
  for (std::size_t b = 0; b < ops.size(); ++b)
    rb.branches.push_back(restricted_branch(psi, ops[b], static_cast<int>(b), opt));
  for (const auto& br : rb.branches) {
    switch (br.kind) {
      case BranchKind::regular:
      case BranchKind::product: {
        const double w = opt.weighting == Weighting::restricted ? br.weight_norm : br.full_norm;
        rb.outcomes.push_back({w, br.output, br.b});
        break;
      }
      case BranchKind::singular:
        sing.push_back(&br);
        break;
      case BranchKind::annihilated:
        break;
    }
  }
  if (!sing.empty()) {
    rb.singular = static_cast<int>(sing.size());
    auto extra = detail::singular_outcomes(psi, sing);
    double mass = 0.0, full = 0.0;
    for (const auto& o : extra) mass += o.weight;
    for (const auto* br : sing) full += br->full_norm;
    if (extra.empty()) rb.annihilated += static_cast<int>(sing.size());
    if (opt.weighting == Weighting::unrestricted && mass > 0.0)
      for (auto& o : extra) o.weight *= full / mass;
    for (auto& o : extra) rb.outcomes.push_back(std::move(o));
  }
  return rb;
}

inline RestrictedBranching restricted_outcomes(const ProductState& psi, const KrausSet& ks,
                                               const SepOptions& opt = {}) {
  return restricted_outcomes(psi, ks.K, opt);
}

inline ProductState sep_step(const ProductState& psi, const KrausSet& ks, Rng& rng, const SepOptions& opt = {},
                             int* branch = nullptr, TrajectoryCounters* counters = nullptr) {
  auto rb = restricted_outcomes(psi, ks, opt);
  std::vector<double> w;
  double total = 0.0;
  for (const auto& o : rb.outcomes) {
    w.push_back(o.weight);
    total += o.weight;
  }
  if (!(total > 1e-300)) throw std::runtime_error("sep_step: every restricted branch vanishes");
  const int j = sample_index(w, rng.uniform());
  if (counters) {
    counters->annihilation_events += rb.annihilated;
    counters->singular_events += rb.singular;
  }
  const auto& o = rb.outcomes[static_cast<std::size_t>(j)];
  if (branch) *branch = o.channel;
  return o.state.normalized();
}

// sum_j w_j |chi_j><chi_j| / sum_j w_j over the restricted outcomes.
inline Mat sep_one_step_map(const ProductState& psi, const KrausSet& ks, const SepOptions& opt = {}) {
  auto rb = restricted_outcomes(psi, ks, opt);
  const int D = psi.shape.total();
  Mat rho = Mat::Zero(D, D);
  double total = 0.0;
  for (const auto& o : rb.outcomes) {
    const Vec v = o.state.full();
    rho += o.weight * v * v.adjoint() / v.squaredNorm();
    total += o.weight;
  }
  return rho / total;
}

// The product operator (x)_k (K^b)_k / <K^b>^(n-1) of a regular branch.
inline Mat branch_map(const ReducedKrausBranch& br) {
  if (br.kind == BranchKind::singular || br.kind == BranchKind::annihilated || br.mean == 0.0)
    throw std::domain_error("branch_map: branch has vanishing mean");
  const int n = static_cast<int>(br.local_ops.size());
  return tensor_product(br.local_ops) / std::pow(br.mean, n - 1);
}

inline std::vector<Mat> mix_branches(const std::vector<ReducedKrausBranch>& branches, const Mat& u) {
  const auto m = static_cast<Eigen::Index>(branches.size());
  if (u.rows() != m || u.cols() != m) throw std::invalid_argument("mix_branches: unitary has wrong size");
  if ((u.adjoint() * u - Mat::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("mix_branches: matrix is not unitary");
  std::vector<Mat> maps;
  for (const auto& br : branches) maps.push_back(branch_map(br));
  std::vector<Mat> out;
  for (Eigen::Index b = 0; b < m; ++b) {
    Mat s = Mat::Zero(maps.front().rows(), maps.front().cols());
    for (Eigen::Index c = 0; c < m; ++c) s += u(b, c) * maps[static_cast<std::size_t>(c)];
    out.push_back(s);
  }
  return out;
}

// rho' = sum_b M^b rho M^b^dag / Q for rho = |psi><psi|.
inline Mat ensemble_map(const std::vector<Mat>& maps, const ProductState& psi) {
  const Vec v = psi.full();
  const Mat rho = v * v.adjoint() / v.squaredNorm();
  Mat out = Mat::Zero(rho.rows(), rho.cols());
  for (const auto& M : maps) out += M * rho * M.adjoint();
  return out / std::real(out.trace());
}

struct SepTrajectory {
  std::vector<double> times;
  std::vector<ProductState> states;
  std::vector<Jump> jump_record;
};

inline SepTrajectory run_sep_trajectory(const LindbladModel& m, const ProductState& psi0, double t_final,
                                        double tau, std::uint64_t master_seed, std::uint64_t index = 0,
                                        const SepOptions& opt = {}) {
  const auto ks = build_kraus(m, tau);
  const int steps = step_count(t_final, tau);
  Rng rng(master_seed, index);
  SepTrajectory tr;
  ProductState psi = psi0.normalized();
  tr.times.push_back(0.0);
  tr.states.push_back(psi);
  for (int s = 0; s < steps; ++s) {
    int b = 0;
    psi = sep_step(psi, ks, rng, opt, &b);
    const double t = (s + 1) * tau;
    if (b != 0) tr.jump_record.push_back({t, b});
    tr.times.push_back(t);
    tr.states.push_back(psi);
  }
  return tr;
}

inline EnsembleSeries run_sep_ensemble(const LindbladModel& m, const ProductState& psi0, double t_final,
                                       double tau, int n_traj, std::uint64_t master_seed,
                                       const EnsembleOptions& eopt = {}, const SepOptions& opt = {}) {
  if (n_traj < 1) throw std::invalid_argument("run_sep_ensemble: n_traj must be >= 1");
  if (psi0.shape != m.shape) throw std::invalid_argument("run_sep_ensemble: initial state shape mismatch");
  const auto ks = build_kraus(m, tau);
  const int steps = step_count(t_final, tau);
  const ProductState start = psi0.normalized();
  return run_trajectories(
      m.shape, steps, tau, n_traj, eopt, m.channels() + 1,
      [&](std::uint64_t index, const TrajectoryObserver& observe, TrajectoryCounters& cnt) {
        Rng rng(master_seed, index);
        ProductState psi = start;
        observe(0, psi.full());
        for (int s = 0; s < steps; ++s) {
          int b = 0;
          psi = sep_step(psi, ks, rng, opt, &b, &cnt);
          cnt.branch_counts[static_cast<std::size_t>(b)] += 1;
          observe(s + 1, psi.full());
        }
      });
}

}  // namespace sepdyn
