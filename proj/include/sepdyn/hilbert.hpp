#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace sepdyn {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr cplx I{0.0, 1.0};

// Largest total Hilbert-space dimension accepted by the tensor helpers.
inline std::size_t& dim_cap() {
  static std::size_t cap = 4096;
  return cap;
}

// Party 0 is the most significant index of a composite basis label.
struct SystemShape {
  std::vector<int> dims;

  SystemShape() = default;
  explicit SystemShape(std::vector<int> d) : dims(std::move(d)) { validate(); }
  SystemShape(std::initializer_list<int> d) : dims(d) { validate(); }

  static SystemShape uniform(int parties, int d) {
    return SystemShape(std::vector<int>(static_cast<std::size_t>(parties), d));
  }

  int parties() const { return static_cast<int>(dims.size()); }
  int dim(int k) const { return dims.at(static_cast<std::size_t>(k)); }

  int total() const {
    std::size_t t = 1;
    for (int d : dims) t *= static_cast<std::size_t>(d);
    return static_cast<int>(t);
  }

  // Product of the dimensions of all parties after k.
  int stride(int k) const {
    int s = 1;
    for (int j = k + 1; j < parties(); ++j) s *= dims[static_cast<std::size_t>(j)];
    return s;
  }

  void validate() const {
    if (dims.empty()) throw std::invalid_argument("SystemShape: need at least one party");
    std::size_t t = 1;
    for (int d : dims) {
      if (d < 2) throw std::invalid_argument("SystemShape: local dimension must be >= 2");
      t *= static_cast<std::size_t>(d);
      if (t > dim_cap())
        throw std::invalid_argument("SystemShape: total dimension exceeds cap " +
                                    std::to_string(dim_cap()));
    }
  }

  bool operator==(const SystemShape& o) const { return dims == o.dims; }
  bool operator!=(const SystemShape& o) const { return !(*this == o); }
};

inline Mat kron(const Mat& a, const Mat& b) {
  Mat r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}

inline Vec kron(const Vec& a, const Vec& b) {
  Vec r(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) r.segment(i * b.size(), b.size()) = a(i) * b;
  return r;
}

template <class T>
T tensor_product(const std::vector<T>& factors) {
  if (factors.empty()) throw std::invalid_argument("tensor_product: empty factor list");
  std::size_t total = 1;
  for (const auto& f : factors) {
    if constexpr (std::is_same_v<T, Mat>) {
      if (f.rows() != f.cols()) throw std::invalid_argument("tensor_product: non-square factor");
    }
    total *= static_cast<std::size_t>(f.rows());
    if (total > dim_cap()) throw std::invalid_argument("tensor_product: dimension exceeds cap");
  }
  T r = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) r = kron(r, factors[i]);
  return r;
}

inline Mat embed_local(const Mat& op, int party, const SystemShape& shape) {
  if (party < 0 || party >= shape.parties())
    throw std::out_of_range("embed_local: party out of range");
  if (op.rows() != shape.dim(party) || op.cols() != shape.dim(party))
    throw std::invalid_argument("embed_local: dimension mismatch");
  const int before = shape.total() / (shape.stride(party) * shape.dim(party));
  const int after = shape.stride(party);
  return kron(kron(Mat::Identity(before, before), op), Mat::Identity(after, after));
}

// Transposes the indices of every party in `parties`.
inline Mat partial_transpose(const Mat& rho, const std::vector<int>& parties,
                             const SystemShape& shape) {
  const int D = shape.total();
  if (rho.rows() != D || rho.cols() != D)
    throw std::invalid_argument("partial_transpose: shape mismatch");
  const int n = shape.parties();
  std::vector<bool> flip(static_cast<std::size_t>(n), false);
  for (int p : parties) {
    if (p < 0 || p >= n) throw std::out_of_range("partial_transpose: party out of range");
    flip[static_cast<std::size_t>(p)] = true;
  }
  Mat out(D, D);
  std::vector<int> ri(static_cast<std::size_t>(n)), ci(static_cast<std::size_t>(n));
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c < D; ++c) {
      int rr = r, cc = c;
      for (int k = n - 1; k >= 0; --k) {
        ri[static_cast<std::size_t>(k)] = rr % shape.dim(k);
        rr /= shape.dim(k);
        ci[static_cast<std::size_t>(k)] = cc % shape.dim(k);
        cc /= shape.dim(k);
      }
      int nr = 0, nc = 0;
      for (int k = 0; k < n; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const int a = flip[ks] ? ci[ks] : ri[ks];
        const int b = flip[ks] ? ri[ks] : ci[ks];
        nr = nr * shape.dim(k) + a;
        nc = nc * shape.dim(k) + b;
      }
      out(nr, nc) = rho(r, c);
    }
  }
  return out;
}

inline Mat partial_transpose(const Mat& rho, int party, const SystemShape& shape) {
  return partial_transpose(rho, std::vector<int>{party}, shape);
}

inline double hermiticity_defect(const Mat& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

inline std::vector<double> hermitian_eigenvalues(const Mat& m, double tol = 1e-8) {
  if (m.rows() != m.cols()) throw std::invalid_argument("hermitian_eigenvalues: non-square");
  if (m.size() > 0 && hermiticity_defect(m) > tol)
    throw std::invalid_argument("hermitian_eigenvalues: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

inline double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

// Hermitian square root of a positive semidefinite matrix (negative eigenvalues clipped).
inline Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.adjoint()));
  Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

inline Vec basis_vector(int dim, int index) {
  if (index < 0 || index >= dim) throw std::out_of_range("basis_vector: index out of range");
  Vec v = Vec::Zero(dim);
  v(index) = 1.0;
  return v;
}

// "10" -> |1>|0> for the given shape (one digit per party).
inline Vec ket(const std::string& digits, const SystemShape& shape) {
  if (static_cast<int>(digits.size()) != shape.parties())
    throw std::invalid_argument("ket: label length must equal the number of parties");
  int idx = 0;
  for (int k = 0; k < shape.parties(); ++k) {
    const int v = digits[static_cast<std::size_t>(k)] - '0';
    if (v < 0 || v >= shape.dim(k)) throw std::invalid_argument("ket: bad digit in '" + digits + "'");
    idx = idx * shape.dim(k) + v;
  }
  return basis_vector(shape.total(), idx);
}

inline Mat projector(const Vec& v) { return v * v.adjoint() / v.squaredNorm(); }

inline Mat outer(const Vec& a, const Vec& b) { return a * b.adjoint(); }

}  // namespace sepdyn
