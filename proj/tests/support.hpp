#pragma once

#include "sepdyn/sepdyn.hpp"

#include <random>

namespace testing_support {

using namespace sepdyn;

inline Mat random_matrix(int d, std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = cplx(n(g), n(g));
  return m;
}

inline Mat random_hermitian(int d, std::mt19937_64& g) {
  const Mat a = random_matrix(d, g);
  return 0.5 * (a + a.adjoint());
}

inline Mat random_unitary(int d, std::mt19937_64& g) {
  Eigen::HouseholderQR<Mat> qr(random_matrix(d, g));
  return qr.householderQ() * Mat::Identity(d, d);
}

inline Vec random_vector(int d, std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = cplx(n(g), n(g));
  return v;
}

inline Mat random_density(int d, std::mt19937_64& g) {
  const Mat a = random_matrix(d, g);
  const Mat r = a * a.adjoint();
  return r / std::real(r.trace());
}

inline ProductState random_product(const SystemShape& s, std::mt19937_64& g) {
  std::vector<Vec> f;
  for (int k = 0; k < s.parties(); ++k) {
    Vec v = random_vector(s.dim(k), g);
    f.push_back(v / v.norm());
  }
  return ProductState(s, f);
}

// Unrestricted-oracle reduction: W^dag F W / prod_{l != k} ||psi_l||^2, W built column by column.
inline Mat reduce_oracle(const Mat& F, const std::vector<Vec>& f, int k) {
  const int dk = static_cast<int>(f[static_cast<std::size_t>(k)].size());
  const int D = static_cast<int>(F.rows());
  Mat W(D, dk);
  double nrm = 1.0;
  for (int j = 0; j < dk; ++j) {
    Vec col = Vec::Ones(1);
    for (std::size_t l = 0; l < f.size(); ++l) {
      Vec e = static_cast<int>(l) == k ? basis_vector(dk, j) : f[l];
      Vec next(col.size() * e.size());
      for (Eigen::Index a = 0; a < col.size(); ++a)
        for (Eigen::Index b = 0; b < e.size(); ++b) next(a * e.size() + b) = col(a) * e(b);
      col = next;
    }
    W.col(j) = col;
  }
  for (std::size_t l = 0; l < f.size(); ++l)
    if (static_cast<int>(l) != k) nrm *= f[l].squaredNorm();
  return W.adjoint() * F * W / nrm;
}

// Local H, and jump operators local on one party dressed with unitaries on the rest, so that
// every L^dag L is a local sum.
inline LindbladModel random_local_model(const SystemShape& s, int channels, std::mt19937_64& g) {
  Mat H = Mat::Zero(s.total(), s.total());
  for (int k = 0; k < s.parties(); ++k) H += embed_local(random_hermitian(s.dim(k), g), k, s);
  std::vector<Mat> L;
  std::uniform_int_distribution<int> pick(0, s.parties() - 1);
  for (int a = 0; a < channels; ++a) {
    const int k = pick(g);
    std::vector<Mat> f;
    for (int l = 0; l < s.parties(); ++l) f.push_back(l == k ? Mat(0.5 * random_matrix(s.dim(l), g)) : random_unitary(s.dim(l), g));
    L.push_back(tensor_product(f));
  }
  return LindbladModel(s, H, L);
}

inline LindbladModel random_model(int d, int channels, std::mt19937_64& g) {
  std::vector<Mat> L;
  for (int a = 0; a < channels; ++a) L.push_back(0.5 * random_matrix(d, g));
  return LindbladModel(SystemShape{d}, random_hermitian(d, g), L);
}

inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing_support
