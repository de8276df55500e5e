#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace knw {

// Differentiable objective: returns the value at `x` and writes the gradient
// into the second argument (same length as x).
using Objective =
    std::function<double(std::span<const double>, std::span<double>)>;

// One sampled point of an optimisation run.
struct TraceRow {
  std::size_t iter = 0;
  double value = 0.0;
  double grad_norm = 0.0;  // infinity norm
};

}  // namespace knw
