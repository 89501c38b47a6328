#pragma once

#include "sepdyn/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepdyn {

inline double negativity(const Mat& rho, int party, const SystemShape& shape) {
  const auto ev = hermitian_eigenvalues(partial_transpose(rho, party, shape), 1e-6);
  return std::max(0.0, -ev.front());
}

// Largest negativity over all bipartitions {S | rest}.
inline double max_negativity(const Mat& rho, const SystemShape& shape) {
  const int n = shape.parties();
  if (n < 2) return 0.0;
  double best = 0.0;
  for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> parties;
    for (int k = 0; k < n - 1; ++k)
      if (mask & (1u << k)) parties.push_back(k);
    const auto ev = hermitian_eigenvalues(partial_transpose(rho, parties, shape), 1e-6);
    best = std::max(best, -ev.front());
  }
  return best;
}

inline double overlap(const Mat& rho, const Vec& target) {
  return std::real(target.dot(rho * target)) / target.squaredNorm();
}

inline double trace_distance(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("trace_distance: dimension mismatch");
  double s = 0.0;
  for (double e : hermitian_eigenvalues(a - b, 1e-6)) s += std::abs(e);
  return 0.5 * s;
}

// Phi+- = (|01> +- |10>)/sqrt2 and Psi+- = (|00> +- |11>)/sqrt2, the naming used by the built-in scenarios.
inline Vec bell_state(const std::string& label) {
  const SystemShape s{2, 2};
  const double r = 1.0 / std::sqrt(2.0);
  if (label == "Phi+") return r * (ket("01", s) + ket("10", s));
  if (label == "Phi-") return r * (ket("01", s) - ket("10", s));
  if (label == "Psi+") return r * (ket("00", s) + ket("11", s));
  if (label == "Psi-") return r * (ket("00", s) - ket("11", s));
  throw std::invalid_argument("unknown Bell label '" + label + "'");
}

// A basis label ("01") or a Bell label ("Phi+"); returns the projector.
inline Mat label_projector(const std::string& label, const SystemShape& shape) {
  if (label.rfind("Phi", 0) == 0 || label.rfind("Psi", 0) == 0) {
    if (shape != SystemShape{2, 2}) throw std::invalid_argument("Bell labels need two qubits");
    return projector(bell_state(label));
  }
  return projector(ket(label, shape));
}

inline double population(const Mat& rho, const std::string& label, const SystemShape& shape) {
  return std::real((label_projector(label, shape) * rho).trace());
}

}  // namespace sepdyn
