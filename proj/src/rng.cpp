#include "mars/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mars {

double Rng::gamma(double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be > 0");
  if (alpha < 1.0) {
    // Boost trick: Gamma(a) = Gamma(a+1) * U^(1/a).
    double u = uniform_pos();
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  // Marsaglia-Tsang squeeze method.
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, int n) {
  std::vector<double> draws(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    draws[i] = gamma(alpha);
    total += draws[i];
  }
  if (total <= 0.0) {
    // All gamma draws underflowed; fall back to uniform proportions.
    for (auto& d : draws) d = 1.0 / n;
    return draws;
  }
  for (auto& d : draws) d /= total;
  return draws;
}

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_int(static_cast<int>(n - i)));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t substream) {
  auto mix = [](uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ stream) ^ substream);
}

}  // namespace mars
