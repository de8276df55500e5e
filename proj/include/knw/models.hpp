#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/jet.hpp"
#include "knw/linalg.hpp"
#include "knw/mlp.hpp"
#include "knw/params.hpp"
#include "knw/problems.hpp"
#include "knw/rng.hpp"

namespace knw {

// Multihead physics-informed network: one shared body whose final hidden
// activations act as basis functions, and one bias-free linear head per task.
// Every prediction is a pure linear combination of the shared basis.
struct MhPinnModel {
  MLPSpec body;  // output_dim == 0: the last hidden layer is the basis
  std::size_t n_tasks = 0;
  ParameterVector params;  // body blocks, then "heads" (n_tasks x n_basis)

  std::size_t n_basis() const { return body.n_basis(); }
  std::size_t body_count() const { return mlp_param_count(body); }

  std::span<const double> body_params() const {
    return {params.values.data(), body_count()};
  }
  std::span<const double> head(std::size_t task) const {
    if (task >= n_tasks) throw ContractViolation("head: task index out of range");
    return {params.values.data() + body_count() + task * n_basis(), n_basis()};
  }
};

inline MhPinnModel make_mh_pinn(const MLPSpec& body, std::size_t n_tasks, Rng& rng) {
  body.validate();
  if (body.output_dim != 0)
    throw ContractViolation("make_mh_pinn: body must expose hidden layer (output_dim 0)");
  if (n_tasks == 0) throw ContractViolation("make_mh_pinn: need at least one task");
  MhPinnModel m;
  m.body = body;
  m.n_tasks = n_tasks;
  mlp_add_layout(body, m.params, "body");
  m.params.add_block("heads", n_tasks, body.n_basis());
  mlp_init_params(body, rng, {m.params.values.data(), m.body_count()});
  // Glorot fan-in for the bias-free heads.
  double lim = std::sqrt(6.0 / static_cast<double>(body.n_basis() + 1));
  auto heads = m.params.block("heads");
  for (auto& w : heads) w = rng.uniform(-lim, lim);
  m.params.validate();
  return m;
}

inline double mh_predict(const MhPinnModel& m, std::size_t task,
                         std::span<const double> x) {
  auto h_w = m.head(task);
  std::vector<double> hidden;
  mlp_hidden<double>(m.body, m.body_params(), x, DoubleCtx{}, hidden);
  return dot(h_w, hidden);
}

// Physics-informed DeepONet: a branch network maps scaled forcing samples to
// combination coefficients, a trunk network maps coordinates to basis values,
// and the prediction is their dot product (no output bias).
struct PiDonModel {
  MLPSpec branch;  // input_dim == #sensors, output_dim == n_basis
  MLPSpec trunk;   // input_dim == spatial dim, output_dim == 0
  // Sampled forcings are divided by this fixed bound before the branch.
  double input_scale = 1.0;
  ParameterVector params;  // branch blocks, then trunk blocks

  std::size_t n_basis() const { return trunk.n_basis(); }
  std::size_t branch_count() const { return mlp_param_count(branch); }

  std::span<const double> branch_params() const {
    return {params.values.data(), branch_count()};
  }
  std::span<const double> trunk_params() const {
    return {params.values.data() + branch_count(),
            mlp_param_count(trunk)};
  }
};

inline PiDonModel make_pidon(const MLPSpec& branch, const MLPSpec& trunk,
                             double input_scale, Rng& rng) {
  branch.validate();
  trunk.validate();
  if (trunk.output_dim != 0)
    throw ContractViolation("make_pidon: trunk must expose hidden layer (output_dim 0)");
  if (branch.output_dim != trunk.n_basis())
    throw ContractViolation("make_pidon: branch output must match trunk basis size");
  PiDonModel m;
  m.branch = branch;
  m.trunk = trunk;
  m.input_scale = input_scale;
  mlp_add_layout(branch, m.params, "branch");
  mlp_add_layout(trunk, m.params, "trunk");
  mlp_init_params(branch, rng,
                  {m.params.values.data(), m.branch_count()});
  mlp_init_params(trunk, rng,
                  {m.params.values.data() + m.branch_count(), mlp_param_count(trunk)});
  m.params.validate();
  return m;
}

inline double pidon_predict(const PiDonModel& m, std::span<const double> f_sensor,
                            std::span<const double> x) {
  if (f_sensor.size() != m.branch.input_dim)
    throw ContractViolation("pidon_predict: sensor count mismatch");
  std::vector<double> scaled(f_sensor.size());
  for (std::size_t i = 0; i < f_sensor.size(); ++i)
    scaled[i] = f_sensor[i] / m.input_scale;
  std::vector<double> bh, coeffs, th;
  mlp_hidden<double>(m.branch, m.branch_params(), scaled, DoubleCtx{}, bh);
  mlp_output<double>(m.branch, m.branch_params(), bh, coeffs);
  mlp_hidden<double>(m.trunk, m.trunk_params(), x, DoubleCtx{}, th);
  double acc = 0.0;
  for (std::size_t j = 0; j < m.n_basis(); ++j) acc += coeffs[j] * th[j];
  return acc;
}

// Mode expansion with fixed coefficients; the verification double used to
// pin loss values at exactly representable solutions.
struct FixedBasisModel {
  Pde pde = Pde::poisson1d;
  double diffusion = 0.1;
  std::vector<double> coeffs;

  double predict(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      acc += coeffs[k] * mode_value(pde, k + 1, x);
    return acc;
  }
};

// Basis functions tabulated over a grid, one row per basis function.
struct BasisMatrix {
  Matrix values;  // n_basis x grid.size()
  Grid grid;

  std::size_t n_basis() const { return values.rows; }
};

// Tabulates the final-hidden-layer activations of `net` over `grid`.
inline BasisMatrix extract_basis(const MLPSpec& net, std::span<const double> params,
                                 const Grid& grid) {
  if (params.size() < mlp_param_count(net) - (net.output_dim > 0
                                                  ? net.output_dim * net.width +
                                                        net.output_dim
                                                  : 0))
    throw ContractViolation("extract_basis: parameter span too short");
  BasisMatrix b;
  b.grid = grid;
  b.values = Matrix(net.n_basis(), grid.size());
  std::vector<double> hidden;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    mlp_hidden<double>(net, params, grid.point(p), DoubleCtx{}, hidden);
    for (std::size_t j = 0; j < net.n_basis(); ++j) b.values(j, p) = hidden[j];
  }
  return b;
}

inline BasisMatrix extract_basis(const MhPinnModel& m, const Grid& grid) {
  return extract_basis(m.body, m.body_params(), grid);
}

inline BasisMatrix extract_basis(const PiDonModel& m, const Grid& grid) {
  return extract_basis(m.trunk, m.trunk_params(), grid);
}

// ---------------------------------------------------------------------------
// Loss evaluators. They present (task, point) -> value/Laplacian views of a
// model over a family's grid, caching the shared per-point work (body or
// trunk jets) across tasks. A point range restricts the evaluator to one
// block of the grid, which is how losses are assembled deterministically in
// parallel.

template <class Ctx>
class MhPinnEval {
 public:
  using T = typename Ctx::Scalar;

  MhPinnEval(const MLPSpec& body, std::span<const T> params, std::size_t n_tasks,
             const TaskFamily& fam, const Ctx& ctx, std::size_t pt_begin = 0,
             std::size_t pt_end = static_cast<std::size_t>(-1))
      : body_(body),
        params_(params),
        n_tasks_(n_tasks),
        fam_(fam),
        ctx_(ctx),
        begin_(pt_begin),
        end_(std::min(pt_end, fam.grid.size())) {
    body_n_ = mlp_param_count(body_);
    h_.resize(end_ - begin_);
    lap_.resize(end_ - begin_);
    bh_.resize(fam.n_boundary());
  }

  PointEval<T> interior(std::size_t task, std::size_t pt) {
    ensure_interior(pt);
    const auto& h = h_[pt - begin_];
    const auto& lap = lap_[pt - begin_];
    std::span<const T> w = head(task);
    PointEval<T> e{ctx_.zero(), ctx_.zero()};
    for (std::size_t j = 0; j < h.size(); ++j) {
      e.u = detail::muladd(w[j], h[j], e.u);
      e.lap = detail::muladd(w[j], lap[j], e.lap);
    }
    return e;
  }

  T boundary(std::size_t task, std::size_t pt) {
    ensure_boundary(pt);
    const auto& h = bh_[pt];
    std::span<const T> w = head(task);
    T acc = ctx_.zero();
    for (std::size_t j = 0; j < h.size(); ++j) acc = detail::muladd(w[j], h[j], acc);
    return acc;
  }

  // Basis values at one interior point; shares the cached per-point work.
  std::span<const T> basis(std::size_t pt) {
    ensure_interior(pt);
    return h_[pt - begin_];
  }

 private:
  std::span<const T> head(std::size_t task) const {
    if (task >= n_tasks_) throw ContractViolation("task index out of range");
    return params_.subspan(body_n_ + task * body_.n_basis(), body_.n_basis());
  }

  void ensure_interior(std::size_t pt) {
    if (pt < begin_ || pt >= end_)
      throw ContractViolation("interior point outside evaluator range");
    auto& h = h_[pt - begin_];
    if (!h.empty()) return;
    auto body_params = params_.subspan(0, body_n_);
    auto x = fam_.grid.point(pt);
    std::vector<Jet2<T>> jets;
    std::vector<double> dir(fam_.dim(), 0.0);
    auto& lap = lap_[pt - begin_];
    for (std::size_t axis = 0; axis < fam_.dim(); ++axis) {
      dir.assign(fam_.dim(), 0.0);
      dir[axis] = 1.0;
      mlp_hidden_jets<T>(body_, body_params, x, dir, ctx_, jets);
      if (axis == 0) {
        h.reserve(jets.size());
        lap.reserve(jets.size());
        for (auto& j : jets) {
          h.push_back(j.f);
          lap.push_back(j.d2);
        }
      } else {
        for (std::size_t j = 0; j < jets.size(); ++j)
          lap[j] = lap[j] + jets[j].d2;
      }
    }
  }

  void ensure_boundary(std::size_t pt) {
    if (pt >= fam_.n_boundary())
      throw ContractViolation("boundary point index out of range");
    auto& h = bh_[pt];
    if (!h.empty()) return;
    mlp_hidden<T>(body_, params_.subspan(0, body_n_), fam_.boundary_point(pt), ctx_, h);
  }

  MLPSpec body_;
  std::span<const T> params_;
  std::size_t n_tasks_;
  const TaskFamily& fam_;
  Ctx ctx_;
  std::size_t begin_, end_, body_n_ = 0;
  std::vector<std::vector<T>> h_, lap_, bh_;
};

template <class Ctx>
class PiDonEval {
 public:
  using T = typename Ctx::Scalar;

  PiDonEval(const MLPSpec& branch, const MLPSpec& trunk, double input_scale,
            std::span<const T> params, std::span<const TaskInstance> tasks,
            const TaskFamily& fam, const Ctx& ctx, std::size_t pt_begin = 0,
            std::size_t pt_end = static_cast<std::size_t>(-1))
      : trunk_(trunk),
        params_(params),
        fam_(fam),
        ctx_(ctx),
        begin_(pt_begin),
        end_(std::min(pt_end, fam.grid.size())) {
    branch_n_ = mlp_param_count(branch);
    h_.resize(end_ - begin_);
    lap_.resize(end_ - begin_);
    bh_.resize(fam.n_boundary());

    // Branch coefficients for every task, once. Sensor forcings enter
    // scaled by the family's fixed bound.
    auto branch_params = params_.subspan(0, branch_n_);
    coeffs_.resize(tasks.size());
    std::vector<double> scaled(branch.input_dim);
    std::vector<T> bh;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].f_sensor.size() != branch.input_dim)
        throw ContractViolation("PiDonEval: task sensor count mismatch");
      for (std::size_t k = 0; k < scaled.size(); ++k)
        scaled[k] = tasks[i].f_sensor[k] / input_scale;
      mlp_hidden<T>(branch, branch_params, scaled, ctx_, bh);
      mlp_output<T>(branch, branch_params, bh, coeffs_[i]);
    }
  }

  PointEval<T> interior(std::size_t task, std::size_t pt) {
    ensure_interior(pt);
    const auto& h = h_[pt - begin_];
    const auto& lap = lap_[pt - begin_];
    const auto& w = coeffs_.at(task);
    PointEval<T> e{ctx_.zero(), ctx_.zero()};
    for (std::size_t j = 0; j < h.size(); ++j) {
      e.u = detail::muladd(w[j], h[j], e.u);
      e.lap = detail::muladd(w[j], lap[j], e.lap);
    }
    return e;
  }

  T boundary(std::size_t task, std::size_t pt) {
    ensure_boundary(pt);
    const auto& h = bh_[pt];
    const auto& w = coeffs_.at(task);
    T acc = ctx_.zero();
    for (std::size_t j = 0; j < h.size(); ++j) acc = detail::muladd(w[j], h[j], acc);
    return acc;
  }

  // Basis values at one interior point; shares the cached per-point work.
  std::span<const T> basis(std::size_t pt) {
    ensure_interior(pt);
    return h_[pt - begin_];
  }

 private:
  void ensure_interior(std::size_t pt) {
    if (pt < begin_ || pt >= end_)
      throw ContractViolation("interior point outside evaluator range");
    auto& h = h_[pt - begin_];
    if (!h.empty()) return;
    auto trunk_params = params_.subspan(branch_n_);
    auto x = fam_.grid.point(pt);
    std::vector<Jet2<T>> jets;
    std::vector<double> dir(fam_.dim(), 0.0);
    auto& lap = lap_[pt - begin_];
    for (std::size_t axis = 0; axis < fam_.dim(); ++axis) {
      dir.assign(fam_.dim(), 0.0);
      dir[axis] = 1.0;
      mlp_hidden_jets<T>(trunk_, trunk_params, x, dir, ctx_, jets);
      if (axis == 0) {
        h.reserve(jets.size());
        lap.reserve(jets.size());
        for (auto& j : jets) {
          h.push_back(j.f);
          lap.push_back(j.d2);
        }
      } else {
        for (std::size_t j = 0; j < jets.size(); ++j)
          lap[j] = lap[j] + jets[j].d2;
      }
    }
  }

  void ensure_boundary(std::size_t pt) {
    if (pt >= fam_.n_boundary())
      throw ContractViolation("boundary point index out of range");
    auto& h = bh_[pt];
    if (!h.empty()) return;
    mlp_hidden<T>(trunk_, params_.subspan(branch_n_), fam_.boundary_point(pt), ctx_, h);
  }

  MLPSpec trunk_;
  std::span<const T> params_;
  const TaskFamily& fam_;
  Ctx ctx_;
  std::size_t begin_, end_, branch_n_ = 0;
  std::vector<std::vector<T>> coeffs_;
  std::vector<std::vector<T>> h_, lap_, bh_;
};

// Evaluator for a FixedBasisModel; everything is analytic, so the values are
// lifted constants. Only meaningful as a single-task view.
template <class Ctx>
class FixedBasisEval {
 public:
  using T = typename Ctx::Scalar;

  FixedBasisEval(const FixedBasisModel& m, const TaskFamily& fam, const Ctx& ctx)
      : m_(m), fam_(fam), ctx_(ctx) {}

  PointEval<T> interior(std::size_t task, std::size_t pt) const {
    if (task != 0) throw ContractViolation("FixedBasisEval is single-task");
    auto x = fam_.grid.point(pt);
    double u = 0.0, lap = 0.0;
    for (std::size_t k = 0; k < m_.coeffs.size(); ++k) {
      u += m_.coeffs[k] * mode_value(m_.pde, k + 1, x);
      lap += m_.coeffs[k] * mode_laplacian(m_.pde, k + 1, x);
    }
    return {ctx_.c(u), ctx_.c(lap)};
  }

  T boundary(std::size_t task, std::size_t pt) const {
    if (task != 0) throw ContractViolation("FixedBasisEval is single-task");
    return ctx_.c(m_.predict(fam_.boundary_point(pt)));
  }

 private:
  const FixedBasisModel& m_;
  const TaskFamily& fam_;
  Ctx ctx_;
};

// Grid predictions for error metrics and exports.
inline std::vector<double> predict_grid(const MhPinnModel& m, std::size_t task,
                                        const Grid& grid) {
  std::vector<double> out(grid.size()), hidden;
  auto w = m.head(task);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    mlp_hidden<double>(m.body, m.body_params(), grid.point(p), DoubleCtx{}, hidden);
    out[p] = dot(w, hidden);
  }
  return out;
}

inline std::vector<double> predict_grid(const PiDonModel& m,
                                        const TaskInstance& task, const Grid& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p)
    out[p] = pidon_predict(m, task.f_sensor, grid.point(p));
  return out;
}

}  // namespace knw
