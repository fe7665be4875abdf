#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cirkf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent child seeds from a
/// root seed so that per-client streams do not depend on processing order.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(root) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

inline double gamma_variate(double shape, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0);
  return g(rng);
}

/// Draw from the noncentral chi-square law with `dof` degrees of freedom and
/// noncentrality `nc`. For dof > 1 the normal-plus-central decomposition
/// (Z + sqrt(nc))^2 + chi2(dof - 1) is used; otherwise the Poisson mixture
/// chi2(dof + 2N), N ~ Poisson(nc / 2).
inline double noncentral_chi_square(double dof, double nc, Rng& rng) {
  if (dof > 1.0) {
    const double z = standard_normal(rng) + std::sqrt(nc);
    return z * z + 2.0 * gamma_variate(0.5 * (dof - 1.0), rng);
  }
  long long mixing = 0;
  if (nc > 0.0) {
    std::poisson_distribution<long long> p(0.5 * nc);
    mixing = p(rng);
  }
  return 2.0 * gamma_variate(0.5 * dof + static_cast<double>(mixing), rng);
}

}  // namespace cirkf
