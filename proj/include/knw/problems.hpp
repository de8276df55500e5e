#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/jet.hpp"
#include "knw/modes.hpp"
#include "knw/rng.hpp"

namespace knw {

// Evaluation lattice shared by residual terms, error reporting, and the
// basis matrices. Endpoints are included; 2d grids are row-major with the
// x index outermost.
struct Grid {
  std::size_t dim = 1;
  std::size_t nx = 0, ny = 0;
  std::vector<double> pts;  // dim * size() coordinates, flattened per point

  std::size_t size() const { return dim == 1 ? nx : nx * ny; }
  std::span<const double> point(std::size_t i) const {
    return {pts.data() + dim * i, dim};
  }
};

inline Grid make_grid_1d(std::size_t n, double lo, double hi) {
  if (n < 2) throw ContractViolation("make_grid_1d: need at least 2 points");
  Grid g;
  g.dim = 1;
  g.nx = n;
  g.pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    g.pts.push_back(lo + (hi - lo) * static_cast<double>(i) /
                             static_cast<double>(n - 1));
  return g;
}

inline Grid make_grid_2d(std::size_t nx, std::size_t ny, double lo, double hi) {
  if (nx < 2 || ny < 2) throw ContractViolation("make_grid_2d: need at least 2x2");
  Grid g;
  g.dim = 2;
  g.nx = nx;
  g.ny = ny;
  g.pts.reserve(2 * nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nx - 1);
    for (std::size_t j = 0; j < ny; ++j) {
      double y = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(ny - 1);
      g.pts.push_back(x);
      g.pts.push_back(y);
    }
  }
  return g;
}

// A parametric family of manufactured problems: the coefficient box the
// tasks are drawn from, the discretisation every loss and metric uses, and
// the sensor layout for forcing-conditioned models.
struct TaskFamily {
  Pde pde = Pde::poisson1d;
  std::size_t n_modes = 5;
  double coeff_lo = 0.0, coeff_hi = 1.0;
  std::size_t n_tasks = 20;
  double diffusion = 0.1;  // allen_cahn2d only

  Grid grid;
  std::vector<double> boundary;  // dim-flattened boundary points
  std::vector<double> sensors;   // dim-flattened forcing sample points
  // Fixed bound on the forcing magnitude over the coefficient box; sampled
  // forcings are divided by it before entering a branch network.
  double forcing_scale = 1.0;

  std::size_t dim() const { return grid.dim; }
  std::size_t n_boundary() const { return boundary.size() / grid.dim; }
  std::size_t n_sensors() const { return sensors.size() / grid.dim; }
  std::span<const double> boundary_point(std::size_t i) const {
    return {boundary.data() + grid.dim * i, grid.dim};
  }
  std::span<const double> sensor_point(std::size_t i) const {
    return {sensors.data() + grid.dim * i, grid.dim};
  }

  void validate() const {
    if (n_modes == 0) throw ContractViolation("TaskFamily: n_modes must be positive");
    if (!(coeff_lo < coeff_hi))
      throw ContractViolation("TaskFamily: coefficient bounds must satisfy lo < hi");
    if (n_tasks == 0) throw ContractViolation("TaskFamily: n_tasks must be positive");
    if (grid.size() == 0) throw ContractViolation("TaskFamily: empty grid");
    if (forcing_scale <= 0.0)
      throw ContractViolation("TaskFamily: forcing_scale must be positive");
  }
};

namespace detail {

inline double sum_k2(std::size_t n_modes) {
  double s = 0.0;
  for (std::size_t k = 1; k <= n_modes; ++k) s += static_cast<double>(k * k);
  return s;
}

// Analytic sup bounds of |f| over the coefficient box, used to normalise
// branch inputs to order one.
inline double forcing_bound(Pde pde, std::size_t n_modes, double lo, double hi,
                            double diffusion) {
  double cmax = std::max(std::abs(lo), std::abs(hi));
  double lap = M_PI * M_PI * sum_k2(n_modes) * cmax;
  if (pde == Pde::poisson1d) return std::max(lap, 1.0);
  double umax = static_cast<double>(n_modes) * cmax;
  return std::max(diffusion * 2.0 * lap + umax * umax * umax + umax, 1.0);
}

}  // namespace detail

// 1d Poisson family on [-1,1]: 512 interior/evaluation points, the two
// interval ends as boundary, 50 equispaced forcing sensors.
inline TaskFamily poisson_family(std::size_t grid_points = 512,
                                 std::size_t sensor_count = 50) {
  TaskFamily f;
  f.pde = Pde::poisson1d;
  f.grid = make_grid_1d(grid_points, -1.0, 1.0);
  f.boundary = {-1.0, 1.0};
  Grid s = make_grid_1d(sensor_count, -1.0, 1.0);
  f.sensors = std::move(s.pts);
  f.forcing_scale =
      detail::forcing_bound(f.pde, f.n_modes, f.coeff_lo, f.coeff_hi, f.diffusion);
  return f;
}

// 2d Allen-Cahn family on [0,1]^2: 51x51 evaluation grid, each edge node
// once as boundary, 11x11 forcing sensors.
inline TaskFamily allen_cahn_family(std::size_t points_per_axis = 51,
                                    std::size_t sensors_per_axis = 11) {
  TaskFamily f;
  f.pde = Pde::allen_cahn2d;
  f.grid = make_grid_2d(points_per_axis, points_per_axis, 0.0, 1.0);
  const std::size_t n = points_per_axis;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == 0 || i + 1 == n || j == 0 || j + 1 == n) {
        f.boundary.push_back(f.grid.pts[2 * (i * n + j)]);
        f.boundary.push_back(f.grid.pts[2 * (i * n + j) + 1]);
      }
    }
  }
  Grid s = make_grid_2d(sensors_per_axis, sensors_per_axis, 0.0, 1.0);
  f.sensors = std::move(s.pts);
  f.forcing_scale =
      detail::forcing_bound(f.pde, f.n_modes, f.coeff_lo, f.coeff_hi, f.diffusion);
  return f;
}

// One manufactured problem: u is the mode expansion with the stored
// coefficients and f is whatever forcing makes u solve the PDE exactly.
struct TaskInstance {
  Pde pde = Pde::poisson1d;
  double diffusion = 0.1;
  std::vector<double> coeffs;
  std::vector<double> f_sensor;  // raw forcing at the family's sensors

  double u(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      acc += coeffs[k] * mode_value(pde, k + 1, x);
    return acc;
  }

  double laplacian(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      acc += coeffs[k] * mode_laplacian(pde, k + 1, x);
    return acc;
  }

  double f(std::span<const double> x) const {
    if (pde == Pde::poisson1d) return laplacian(x);
    double uv = u(x);
    return diffusion * laplacian(x) + uv * uv * uv - uv;
  }
};

inline TaskInstance manufacture_poisson(std::span<const double> coeffs) {
  TaskInstance t;
  t.pde = Pde::poisson1d;
  t.coeffs.assign(coeffs.begin(), coeffs.end());
  return t;
}

inline TaskInstance manufacture_allen_cahn(std::span<const double> coeffs,
                                           double diffusion = 0.1) {
  TaskInstance t;
  t.pde = Pde::allen_cahn2d;
  t.diffusion = diffusion;
  t.coeffs.assign(coeffs.begin(), coeffs.end());
  return t;
}

// Instance of `fam` with the given coefficients, forcing sensors filled.
inline TaskInstance make_instance(const TaskFamily& fam,
                                  std::span<const double> coeffs) {
  if (coeffs.size() != fam.n_modes)
    throw ContractViolation("make_instance: coefficient count != n_modes");
  TaskInstance t = fam.pde == Pde::poisson1d
                       ? manufacture_poisson(coeffs)
                       : manufacture_allen_cahn(coeffs, fam.diffusion);
  t.f_sensor.reserve(fam.n_sensors());
  for (std::size_t i = 0; i < fam.n_sensors(); ++i)
    t.f_sensor.push_back(t.f(fam.sensor_point(i)));
  return t;
}

// Draws `count` instances with i.i.d. uniform coefficients from the family
// box, on the task-sampling stream of `seed`. Task-major draw order.
inline std::vector<TaskInstance> sample_tasks(const TaskFamily& fam,
                                              std::size_t count,
                                              std::uint64_t seed) {
  fam.validate();
  Rng rng = Rng::stream(seed, Stream::task_sampling);
  std::vector<TaskInstance> tasks;
  tasks.reserve(count);
  std::vector<double> c(fam.n_modes);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& ck : c) ck = rng.uniform(fam.coeff_lo, fam.coeff_hi);
    tasks.push_back(make_instance(fam, c));
  }
  return tasks;
}

inline std::vector<double> u_on_grid(const TaskInstance& t, const Grid& g) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = t.u(g.point(i));
  return v;
}

inline std::vector<double> f_on_grid(const TaskInstance& t, const Grid& g) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = t.f(g.point(i));
  return v;
}

// Relative weights of the physics-loss terms and the n-width regulariser.
struct LossWeights {
  double residual = 1.0;
  double boundary = 10.0;
  double nwidth = 10.0;
};

// Value and Laplacian of a predictor at one point.
template <class T>
struct PointEval {
  T u;
  T lap;
};

// PDE residual at one point given the predictor's value and Laplacian and
// the manufactured forcing value (lifted constant).
template <class T>
T pde_residual(Pde pde, double diffusion, const PointEval<T>& e, const T& f_val) {
  if (pde == Pde::poisson1d) return e.lap - f_val;
  return diffusion * e.lap + e.u * (sq(e.u) - 1.0) - f_val;
}

// Mean-square PDE residual of one task over the family grid, scaled by
// weights.residual. `eval` maps (task, point index) to a PointEval.
template <class Ctx, class Eval,
          class T = typename Ctx::Scalar>
T residual_loss(const TaskFamily& fam, const TaskInstance& inst, std::size_t task,
                Eval&& eval, const LossWeights& weights, const Ctx& ctx) {
  const std::size_t m = fam.grid.size();
  T acc = ctx.zero();
  for (std::size_t p = 0; p < m; ++p) {
    PointEval<T> e = eval(task, p);
    T f_val = ctx.c(inst.f(fam.grid.point(p)));
    acc = acc + sq(pde_residual(fam.pde, fam.diffusion, e, f_val));
  }
  return (weights.residual / static_cast<double>(m)) * acc;
}

// Mean-square boundary mismatch of one task, scaled by weights.boundary.
// `predict` maps (task, boundary point index) to the predicted value.
template <class Ctx, class Predict,
          class T = typename Ctx::Scalar>
T boundary_loss(const TaskFamily& fam, const TaskInstance& inst, std::size_t task,
                Predict&& predict, const LossWeights& weights, const Ctx& ctx) {
  const std::size_t n = fam.n_boundary();
  if (n == 0) throw ContractViolation("boundary_loss: family has no boundary points");
  T acc = ctx.zero();
  for (std::size_t p = 0; p < n; ++p) {
    T diff = predict(task, p) - ctx.c(inst.u(fam.boundary_point(p)));
    acc = acc + sq(diff);
  }
  return (weights.boundary / static_cast<double>(n)) * acc;
}

// Physics part of the multitask objective: the sum over tasks of residual
// and boundary terms. The n-width regulariser, when active, is added by the
// caller on top of this.
template <class Ctx, class Eval, class Predict,
          class T = typename Ctx::Scalar>
T multitask_loss(const TaskFamily& fam, std::span<const TaskInstance> tasks,
                 Eval&& eval, Predict&& predict, const LossWeights& weights,
                 const Ctx& ctx) {
  T total = ctx.zero();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    total = total + residual_loss(fam, tasks[i], i, eval, weights, ctx);
    total = total + boundary_loss(fam, tasks[i], i, predict, weights, ctx);
  }
  return total;
}

}  // namespace knw
