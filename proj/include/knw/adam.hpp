#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/linalg.hpp"
#include "knw/objective.hpp"

namespace knw {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. The state holds first/second moment estimates;
// each step may override the learning rate, which is how schedules are
// applied without touching the moments.
class Adam {
 public:
  explicit Adam(std::size_t n, AdamConfig cfg = {})
      : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> x, std::span<const double> g) {
    step_lr(x, g, cfg_.lr);
  }

  void step_lr(std::span<double> x, std::span<const double> g, double lr) {
    if (x.size() != m_.size() || g.size() != m_.size())
      throw ContractViolation("Adam: size mismatch");
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Runs `epochs` full-gradient Adam steps on `f`, tracing every
// `trace_every`-th epoch (0 disables tracing; the final epoch is always
// traced when tracing is on).
inline std::vector<TraceRow> adam_minimize(const Objective& f,
                                           std::span<double> x,
                                           std::size_t epochs,
                                           AdamConfig cfg = {},
                                           std::size_t trace_every = 0) {
  Adam opt(x.size(), cfg);
  std::vector<TraceRow> trace;
  std::vector<double> g(x.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    double v = f(x, g);
    if (trace_every && (e % trace_every == 0 || e + 1 == epochs))
      trace.push_back({e, v, norm_inf(g)});
    opt.step(x, g);
  }
  return trace;
}

}  // namespace knw
