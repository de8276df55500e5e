#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "knw/adam.hpp"
#include "knw/errors.hpp"
#include "knw/jet.hpp"
#include "knw/linalg.hpp"
#include "knw/models.hpp"
#include "knw/problems.hpp"
#include "knw/rng.hpp"
#include "knw/tape.hpp"

namespace knw {

// Box constraint on the solution-family coefficients, enforced smoothly: the
// optimiser works on unconstrained raw values and c = lo + (hi-lo)*sigmoid(raw)
// never leaves the box.
struct CoefficientBox {
  double lo = 0.0, hi = 1.0;
  std::size_t n = 5;

  template <class Ctx, class T = typename Ctx::Scalar>
  std::vector<T> bound(std::span<const T> raw, const Ctx&) const {
    if (raw.size() != n) throw ContractViolation("CoefficientBox: raw size != n");
    std::vector<T> c;
    c.reserve(n);
    for (const T& r : raw) c.push_back((hi - lo) * sigmoid(r) + lo);
    return c;
  }
};

struct KnwConfig {
  std::size_t epochs_bi = 5000;
  std::size_t epochs_tri_warmup = 1000;
  enum class Mode { absolute, relative };
  Mode mode = Mode::absolute;
  bool normalize_by_forcing = false;
  bool unit_ball = false;
  // Constant 1e-3 steps by default, same as every other Adam instance here.
  // Setting start != end anneals the rate geometrically across the run.
  double c_lr_start = 1e-3, c_lr_end = 1e-3;
  double w2_lr_start = 1e-3, w2_lr_end = 1e-3;
  std::uint64_t seed = 0;
  std::size_t trace_every = 100;

  void validate() const {
    if (mode == Mode::relative && normalize_by_forcing)
      throw ConfigError("knw: relative mode and forcing normalisation are exclusive");
    if (epochs_bi == 0) throw ConfigError("knw: epochs_bi must be positive");
  }
};

struct MetricTraceRow {
  std::size_t epoch = 0;
  double value = 0.0;
  double grad_norm = 0.0;      // ascent direction, infinity norm
  std::vector<double> c;       // bounded coefficients at this epoch
  double w2_norm = 0.0;
};

struct KnwResult {
  double value_abs = 0.0;  // ||u(c*) - u~(w2*)||_2 over the grid
  double value_rel = 0.0;  // value_abs / ||u(c*)||_2
  std::vector<double> c_star;
  std::vector<double> w2_star;
  std::vector<double> raw_star;  // unbounded coordinates behind c_star
  std::vector<MetricTraceRow> trace;
};

// Warm start for the metric agents (raw coefficients, not bounded ones).
struct KnwInit {
  std::vector<double> raw;
  std::vector<double> w2;
};

// Solution modes tabulated over the family grid, one row per mode.
inline Matrix mode_matrix(const TaskFamily& fam) {
  Matrix u(fam.n_modes, fam.grid.size());
  for (std::size_t k = 0; k < fam.n_modes; ++k)
    for (std::size_t p = 0; p < fam.grid.size(); ++p)
      u(k, p) = mode_value(fam.pde, k + 1, fam.grid.point(p));
  return u;
}

inline Matrix mode_laplacian_matrix(const TaskFamily& fam) {
  Matrix u(fam.n_modes, fam.grid.size());
  for (std::size_t k = 0; k < fam.n_modes; ++k)
    for (std::size_t p = 0; p < fam.grid.size(); ++p)
      u(k, p) = mode_laplacian(fam.pde, k + 1, fam.grid.point(p));
  return u;
}

namespace detail {

inline void check_basis(const BasisMatrix& basis, const TaskFamily& fam) {
  if (basis.values.cols != fam.grid.size())
    throw ContractViolation("basis grid does not match family grid");
}

}  // namespace detail

// Plain evaluation of ||u(c) - u~(w2)||_2 over the grid, with the optional
// normalisations of KnwConfig. `c` is already bounded.
inline double knw_value(std::span<const double> c, std::span<const double> w2,
                        const BasisMatrix& basis, const TaskFamily& fam,
                        const KnwConfig& cfg) {
  detail::check_basis(basis, fam);
  if (c.size() != fam.n_modes || w2.size() != basis.n_basis())
    throw ContractViolation("knw_value: coefficient size mismatch");

  std::vector<double> cc(c.begin(), c.end());
  if (cfg.unit_ball) {
    double nc = norm2(cc);
    if (nc > 1.0)
      for (auto& v : cc) v /= nc;
  }

  const std::size_t p_count = fam.grid.size();
  double s = 0.0, su = 0.0, sf = 0.0;
  for (std::size_t p = 0; p < p_count; ++p) {
    auto x = fam.grid.point(p);
    double u = 0.0, lap = 0.0;
    for (std::size_t k = 0; k < fam.n_modes; ++k) {
      u += cc[k] * mode_value(fam.pde, k + 1, x);
      lap += cc[k] * mode_laplacian(fam.pde, k + 1, x);
    }
    double ut = 0.0;
    for (std::size_t j = 0; j < basis.n_basis(); ++j)
      ut += w2[j] * basis.values(j, p);
    double r = u - ut;
    s += r * r;
    su += u * u;
    if (cfg.normalize_by_forcing) {
      double f = fam.pde == Pde::poisson1d ? lap
                                           : fam.diffusion * lap + u * u * u - u;
      sf += f * f;
    }
  }
  double val = std::sqrt(s);
  if (cfg.mode == KnwConfig::Mode::relative) val /= std::sqrt(su);
  if (cfg.normalize_by_forcing) val /= std::sqrt(sf);
  return val;
}

// Approximates the worst-case best-approximation error of the frozen basis
// by simultaneous gradient ascent on the raw solution coefficients and
// descent on the combination weights (the bi-optimisation loop). Both agents
// are Adam with annealed learning rates; one backward sweep per epoch feeds
// both because ascent is descent on the negated adjoints.
inline KnwResult compute_metric(const BasisMatrix& basis, const TaskFamily& fam,
                                const KnwConfig& cfg,
                                const KnwInit* warm = nullptr) {
  cfg.validate();
  detail::check_basis(basis, fam);

  const std::size_t n_modes = fam.n_modes;
  const std::size_t n_basis = basis.n_basis();
  const std::size_t p_count = fam.grid.size();

  const Matrix modes = mode_matrix(fam);
  const Matrix mode_lap =
      cfg.normalize_by_forcing ? mode_laplacian_matrix(fam) : Matrix();

  std::vector<double> raw(n_modes), w2(n_basis, 0.0);
  if (warm) {
    if (warm->raw.size() != n_modes || warm->w2.size() != n_basis)
      throw ContractViolation("compute_metric: warm start size mismatch");
    raw = warm->raw;
    w2 = warm->w2;
  } else {
    Rng rng = Rng::stream(cfg.seed, Stream::agent_init);
    for (auto& r : raw) r = 0.5 * rng.normal();
  }

  Adam opt_raw(n_modes), opt_w2(n_basis);
  std::vector<double> g_raw(n_modes), g_w2(n_basis);
  KnwResult res;
  Tape tape;

  const double c_decay = cfg.epochs_bi > 1
                             ? std::pow(cfg.c_lr_end / cfg.c_lr_start,
                                        1.0 / static_cast<double>(cfg.epochs_bi - 1))
                             : 1.0;
  const double w_decay = cfg.epochs_bi > 1
                             ? std::pow(cfg.w2_lr_end / cfg.w2_lr_start,
                                        1.0 / static_cast<double>(cfg.epochs_bi - 1))
                             : 1.0;
  double lr_c = cfg.c_lr_start, lr_w = cfg.w2_lr_start;

  CoefficientBox box{fam.coeff_lo, fam.coeff_hi, n_modes};

  for (std::size_t epoch = 0; epoch < cfg.epochs_bi; ++epoch) {
    tape.reset();
    std::vector<Value> raw_v, w2_v;
    raw_v.reserve(n_modes);
    w2_v.reserve(n_basis);
    for (double r : raw) raw_v.push_back(tape.var(r));
    for (double w : w2) w2_v.push_back(tape.var(w));

    TapeCtx ctx{&tape};
    std::vector<Value> c = box.bound(std::span<const Value>(raw_v), ctx);

    if (cfg.unit_ball) {
      Value nc2 = tape.zero();
      for (const Value& ck : c) nc2 = nc2 + sq(ck);
      Value nc = sqrt(nc2);
      if (tape.val(nc) > 1.0)
        for (auto& ck : c) ck = ck / nc;
    }

    Value s = tape.zero(), su = tape.zero(), sf = tape.zero();
    for (std::size_t p = 0; p < p_count; ++p) {
      Value u = tape.zero();
      for (std::size_t k = 0; k < n_modes; ++k) u = u + modes(k, p) * c[k];
      Value ut = tape.zero();
      for (std::size_t j = 0; j < n_basis; ++j)
        ut = ut + basis.values(j, p) * w2_v[j];
      s = s + sq(u - ut);
      if (cfg.mode == KnwConfig::Mode::relative) su = su + sq(u);
      if (cfg.normalize_by_forcing) {
        Value lap = tape.zero();
        for (std::size_t k = 0; k < n_modes; ++k)
          lap = lap + mode_lap(k, p) * c[k];
        Value fv = fam.pde == Pde::poisson1d
                       ? lap
                       : fam.diffusion * lap + u * (sq(u) - 1.0);
        sf = sf + sq(fv);
      }
    }

    Value objective = sqrt(s);
    if (cfg.mode == KnwConfig::Mode::relative) objective = objective / sqrt(su);
    if (cfg.normalize_by_forcing) objective = objective / sqrt(sf);

    try {
      tape.check_finite_value(objective);
    } catch (const NumericalError& e) {
      throw NumericalError("knw metric at epoch " + std::to_string(epoch) + ": " +
                           e.what());
    }
    tape.backward(objective);
    for (std::size_t i = 0; i < n_modes; ++i) g_raw[i] = -tape.adj(raw_v[i]);
    for (std::size_t j = 0; j < n_basis; ++j) g_w2[j] = tape.adj(w2_v[j]);

    if (cfg.trace_every &&
        (epoch % cfg.trace_every == 0 || epoch + 1 == cfg.epochs_bi)) {
      MetricTraceRow row{epoch, tape.val(objective), norm_inf(g_raw), {}, norm2(w2)};
      row.c.reserve(n_modes);
      for (const Value& ck : c) row.c.push_back(tape.val(ck));
      res.trace.push_back(std::move(row));
    }

    opt_raw.step_lr(raw, g_raw, lr_c);
    opt_w2.step_lr(w2, g_w2, lr_w);
    lr_c *= c_decay;
    lr_w *= w_decay;
  }

  res.raw_star = raw;
  res.w2_star = w2;
  DoubleCtx dctx;
  res.c_star = box.bound(std::span<const double>(raw), dctx);
  if (cfg.unit_ball) {
    double nc = norm2(res.c_star);
    if (nc > 1.0)
      for (auto& v : res.c_star) v /= nc;
  }

  KnwConfig abs_cfg = cfg;
  abs_cfg.mode = KnwConfig::Mode::absolute;
  abs_cfg.normalize_by_forcing = false;
  abs_cfg.unit_ball = false;  // c_star is already feasible
  res.value_abs = knw_value(res.c_star, res.w2_star, basis, fam, abs_cfg);

  double su = 0.0;
  for (std::size_t p = 0; p < p_count; ++p) {
    double u = 0.0;
    for (std::size_t k = 0; k < n_modes; ++k) u += res.c_star[k] * modes(k, p);
    su += u * u;
  }
  if (su == 0.0) throw NumericalError("knw metric: worst-case solution has zero norm");
  res.value_rel = res.value_abs / std::sqrt(su);
  return res;
}

struct VertexLsResult {
  double value = 0.0;          // max over vertices of the best-approximation error
  std::vector<double> c;       // attaining vertex
  std::vector<double> w2;      // least-squares weights at that vertex
};

// Exhaustive reference for the metric: for a frozen basis the inner
// minimisation is linear least squares, so the objective is convex in c and
// the box maximum sits at a vertex. Enumerates all 2^n_modes vertices and
// solves each least-squares problem through the Gram pseudo-inverse. This is
// the independent route the bi-optimisation is checked against.
inline VertexLsResult vertex_ls_oracle(const BasisMatrix& basis,
                                       const TaskFamily& fam) {
  detail::check_basis(basis, fam);
  if (fam.n_modes > 24)
    throw ContractViolation("vertex_ls_oracle: too many modes to enumerate");

  const Matrix modes = mode_matrix(fam);
  const std::size_t n = fam.n_modes;
  const std::size_t p_count = fam.grid.size();
  GramSolver solver(basis.values);

  VertexLsResult best;
  std::vector<double> c(n), t(p_count), rhs(basis.n_basis()), ut(p_count);
  for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
    for (std::size_t k = 0; k < n; ++k)
      c[k] = (mask >> k) & 1 ? fam.coeff_hi : fam.coeff_lo;

    for (std::size_t p = 0; p < p_count; ++p) {
      double u = 0.0;
      for (std::size_t k = 0; k < n; ++k) u += c[k] * modes(k, p);
      t[p] = u;
    }
    for (std::size_t j = 0; j < basis.n_basis(); ++j)
      rhs[j] = dot(basis.values.row(j), t);
    std::vector<double> w = solver.solve(rhs);

    double s = 0.0;
    for (std::size_t p = 0; p < p_count; ++p) {
      double v = 0.0;
      for (std::size_t j = 0; j < basis.n_basis(); ++j)
        v += w[j] * basis.values(j, p);
      double r = t[p] - v;
      s += r * r;
    }
    double err = std::sqrt(s);
    if (err > best.value) {
      best.value = err;
      best.c = c;
      best.w2 = std::move(w);
    }
  }
  return best;
}

}  // namespace knw
