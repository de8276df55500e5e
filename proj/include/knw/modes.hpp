#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "knw/errors.hpp"

namespace knw {

enum class Pde : std::uint8_t { poisson1d = 0, allen_cahn2d = 1 };

inline const char* pde_name(Pde p) {
  return p == Pde::poisson1d ? "poisson1d" : "allen_cahn2d";
}

inline std::size_t pde_dim(Pde p) { return p == Pde::poisson1d ? 1 : 2; }

// Solution modes of the manufactured families, k is 1-based. The 1d family
// uses sin(k pi x); the 2d family the separable product sin(k pi x) sin(k pi y).
inline double mode_value(Pde pde, std::size_t k, std::span<const double> x) {
  const double kpi = static_cast<double>(k) * M_PI;
  if (pde == Pde::poisson1d) return std::sin(kpi * x[0]);
  return std::sin(kpi * x[0]) * std::sin(kpi * x[1]);
}

// Laplacian of the mode. Both families are eigenfunctions: the factor is
// -(k pi)^2 in 1d and -2 (k pi)^2 in 2d.
inline double mode_laplacian(Pde pde, std::size_t k, std::span<const double> x) {
  const double kpi = static_cast<double>(k) * M_PI;
  const double factor = (pde == Pde::poisson1d) ? -kpi * kpi : -2.0 * kpi * kpi;
  return factor * mode_value(pde, k, x);
}

}  // namespace knw
