#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/linalg.hpp"
#include "knw/objective.hpp"

namespace knw {

struct LbfgsConfig {
  std::size_t max_iters = 5000;
  std::size_t history = 20;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  double grad_tol = 1e-9;
  std::size_t max_line_iters = 30;
  // strong_wolfe is the training default; exact_secant locates a stationary
  // point of the line function and recovers conjugate-direction behaviour on
  // quadratics.
  enum class LineSearch { strong_wolfe, exact_secant };
  LineSearch line_search = LineSearch::strong_wolfe;
};

struct LbfgsResult {
  std::size_t iters = 0;
  std::size_t evals = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;        // gradient tolerance reached
  bool line_search_failed = false;
  std::vector<TraceRow> trace;
};

namespace detail {

// State shared by the line searches: moving along x0 + a*d re-using the
// caller's buffers, each probe is one objective evaluation.
struct LineProbe {
  const Objective& f;
  std::span<const double> x0;
  std::span<const double> d;
  std::span<double> x_try;
  std::span<double> g_try;
  std::size_t* evals;

  double value = 0.0, slope = 0.0;

  void at(double a) {
    for (std::size_t i = 0; i < x0.size(); ++i) x_try[i] = x0[i] + a * d[i];
    value = f(x_try, g_try);
    ++*evals;
    slope = dot(g_try, d);
  }
};

// Strong Wolfe bracketing search (bracket then zoom by bisection with a
// quadratic-interpolation first guess).
inline double wolfe_search(LineProbe& lp, double f0, double slope0,
                           const LbfgsConfig& cfg, bool& ok) {
  ok = false;
  double a_prev = 0.0, f_prev = f0;
  double a = 1.0;
  double lo = 0.0, hi = 0.0, f_lo = f0;

  std::size_t used = 0;
  bool bracketed = false;
  for (; used < cfg.max_line_iters; ++used) {
    lp.at(a);
    if (lp.value > f0 + cfg.c1 * a * slope0 || (used > 0 && lp.value >= f_prev)) {
      lo = a_prev;
      f_lo = f_prev;
      hi = a;
      bracketed = true;
      break;
    }
    if (std::abs(lp.slope) <= -cfg.c2 * slope0) {
      ok = true;
      return a;
    }
    if (lp.slope >= 0.0) {
      lo = a;
      f_lo = lp.value;
      hi = a_prev;
      bracketed = true;
      break;
    }
    a_prev = a;
    f_prev = lp.value;
    a *= 2.0;
  }
  if (!bracketed) return 0.0;

  for (; used < cfg.max_line_iters; ++used) {
    double a_mid = 0.5 * (lo + hi);
    lp.at(a_mid);
    if (lp.value > f0 + cfg.c1 * a_mid * slope0 || lp.value >= f_lo) {
      hi = a_mid;
    } else {
      if (std::abs(lp.slope) <= -cfg.c2 * slope0) {
        ok = true;
        return a_mid;
      }
      if (lp.slope * (hi - lo) >= 0.0) hi = lo;
      lo = a_mid;
      f_lo = lp.value;
    }
  }
  return 0.0;
}

// Secant iteration on the directional derivative; exact for quadratics in a
// single step.
inline double secant_search(LineProbe& lp, double slope0, const LbfgsConfig& cfg,
                            bool& ok) {
  ok = false;
  double a_prev = 0.0, s_prev = slope0;
  double a = 1.0;
  for (std::size_t used = 0; used < cfg.max_line_iters; ++used) {
    lp.at(a);
    if (std::abs(lp.slope) <= 1e-14 * (1.0 + std::abs(slope0))) {
      ok = true;
      return a;
    }
    double denom = lp.slope - s_prev;
    if (denom == 0.0) break;
    double a_next = a - lp.slope * (a - a_prev) / denom;
    if (!std::isfinite(a_next) || a_next <= 0.0) break;
    a_prev = a;
    s_prev = lp.slope;
    a = a_next;
  }
  // accept the last probe if it at least decreases the objective
  return 0.0;
}

}  // namespace detail

// Limited-memory BFGS with two-loop recursion. Curvature pairs are kept only
// when s.y is safely positive; a non-descent direction resets to steepest
// descent. Stops on the gradient tolerance, the iteration cap, or a failed
// line search.
inline LbfgsResult lbfgs_minimize(const Objective& f, std::span<double> x,
                                  const LbfgsConfig& cfg = {},
                                  std::size_t trace_every = 0) {
  const std::size_t n = x.size();
  LbfgsResult res;
  std::vector<double> g(n), x_try(n), g_try(n), d(n);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> alpha_buf;

  double fx = f(x, g);
  res.evals = 1;

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    double gnorm = norm_inf(g);
    if (trace_every && (it % trace_every == 0))
      res.trace.push_back({it, fx, gnorm});
    if (gnorm <= cfg.grad_tol) {
      res.converged = true;
      break;
    }

    // two-loop recursion: d = -H g
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha_buf[k] = rho_hist[k] * dot(s_hist[k], d);
      axpy(-alpha_buf[k], y_hist[k], d);
    }
    if (!s_hist.empty()) {
      const auto& s_last = s_hist.back();
      const auto& y_last = y_hist.back();
      double gamma = dot(s_last, y_last) / dot(y_last, y_last);
      scal(gamma, d);
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      double beta = rho_hist[k] * dot(y_hist[k], d);
      axpy(alpha_buf[k] - beta, s_hist[k], d);
    }

    double slope0 = dot(g, d);
    if (slope0 >= 0.0) {
      // fall back to steepest descent and drop the history
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope0 = dot(g, d);
      if (slope0 >= 0.0) break;  // gradient numerically zero
    }

    detail::LineProbe lp{f, x, d, x_try, g_try, &res.evals};
    bool ok = false;
    double a = cfg.line_search == LbfgsConfig::LineSearch::exact_secant
                   ? detail::secant_search(lp, slope0, cfg, ok)
                   : detail::wolfe_search(lp, fx, slope0, cfg, ok);
    if (!ok) {
      res.line_search_failed = true;
      break;
    }

    // curvature pair from the accepted step
    std::vector<double> s_new(n), y_new(n);
    for (std::size_t i = 0; i < n; ++i) {
      s_new[i] = a * d[i];
      y_new[i] = lp.g_try[i] - g[i];
    }
    double sy = dot(s_new, y_new);
    if (sy > 1e-10 * norm2(s_new) * norm2(y_new)) {
      s_hist.push_back(std::move(s_new));
      y_hist.push_back(std::move(y_new));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > cfg.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    for (std::size_t i = 0; i < n; ++i) x[i] = x_try[i];
    g.assign(g_try.begin(), g_try.end());
    fx = lp.value;
    ++res.iters;
  }

  res.value = fx;
  res.grad_norm = norm_inf(g);
  if (trace_every) res.trace.push_back({res.iters, fx, res.grad_norm});
  return res;
}

}  // namespace knw
