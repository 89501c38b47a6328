#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sepdyn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-trajectory stream: depends only on the master seed and the trajectory index.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}
  Rng(std::uint64_t master, std::uint64_t index) : eng_(stream_seed(master, index)) {}

  // Uniform in [0,1) with 53 random bits; portable across standard libraries.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  std::uint64_t bits() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

// Index i with probability weights[i]/sum(weights), using a single uniform variate.
inline int sample_index(const std::vector<double>& weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double target = u * total;
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = static_cast<int>(i);
    if (target < acc) return last;
  }
  return last;
}

}  // namespace sepdyn
