#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/linalg.hpp"
#include "knw/models.hpp"

namespace knw {

// Relative L2 error ||truth - pred||_2 / ||truth||_2 over matching samples.
inline double relative_l2(std::span<const double> pred,
                          std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw ContractViolation("relative_l2: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = truth[i] - pred[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (den == 0.0)
    throw ContractViolation("relative_l2: reference has zero norm");
  return std::sqrt(num) / std::sqrt(den);
}

// Normalised singular-value spectrum of a tabulated basis: sigma_k / sigma_1,
// sorted descending. A flat spectrum means the basis functions stay linearly
// independent over the grid; fast decay means they collapse.
inline std::vector<double> svd_spectrum(const BasisMatrix& basis) {
  double total = 0.0;
  for (double v : basis.values.data) total += std::abs(v);
  if (total == 0.0)
    throw ContractViolation("svd_spectrum: basis matrix is identically zero");
  auto sigma = singular_values_rows(basis.values);
  const double top = sigma[0];
  for (auto& s : sigma) s /= top;
  return sigma;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator); 0 for fewer than two samples.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ContractViolation("median of empty set");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace knw
