#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "knw/errors.hpp"
#include "knw/linalg.hpp"
#include "knw/models.hpp"
#include "knw/nwidth.hpp"
#include "knw/objective.hpp"
#include "knw/problems.hpp"
#include "knw/tape.hpp"

namespace knw {

// Persistent worker pool with a shared-counter parallel for. The calling
// thread participates, so threads(1) runs everything inline with no
// synchronisation overhead.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads) {
    if (threads == 0) throw ContractViolation("ThreadPool: need at least one thread");
    for (std::size_t i = 0; i + 1 < threads; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t threads() const { return workers_.size() + 1; }

  // Calls fn(i) once for every i in [0, count), work-shared across all
  // threads. fn must be safe to run concurrently for distinct indices.
  // The first exception thrown by fn cancels the rest and is rethrown here.
  void run(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    {
      std::lock_guard<std::mutex> lock(mu_);
      job_ = &fn;
      count_ = count;
      next_.store(0, std::memory_order_relaxed);
      busy_ = workers_.size();
      ++generation_;
    }
    cv_.notify_all();
    drain(fn);
    std::unique_lock<std::mutex> lock(mu_);
    done_cv_.wait(lock, [this] { return busy_ == 0; });
    job_ = nullptr;
    if (error_) {
      std::exception_ptr e = error_;
      error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

 private:
  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* fn = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        fn = job_;
      }
      drain(*fn);
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (--busy_ == 0) done_cv_.notify_all();
      }
    }
  }

  void drain(const std::function<void(std::size_t)>& fn) {
    for (;;) {
      const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= count_) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!error_) error_ = std::current_exception();
        next_.store(count_, std::memory_order_relaxed);
        return;
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t busy_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

namespace detail {

// One reusable tape per thread; reset() keeps the capacity, so after the
// first evaluation no block allocates.
inline Tape& tl_tape() {
  static thread_local Tape t;
  return t;
}

template <class Ctx>
MhPinnEval<Ctx> make_eval(const MhPinnModel& m,
                          std::span<const typename Ctx::Scalar> params,
                          std::span<const TaskInstance>, const TaskFamily& fam,
                          const Ctx& ctx, std::size_t b, std::size_t e) {
  return MhPinnEval<Ctx>(m.body, params, m.n_tasks, fam, ctx, b, e);
}

template <class Ctx>
PiDonEval<Ctx> make_eval(const PiDonModel& m,
                         std::span<const typename Ctx::Scalar> params,
                         std::span<const TaskInstance> tasks, const TaskFamily& fam,
                         const Ctx& ctx, std::size_t b, std::size_t e) {
  return PiDonEval<Ctx>(m.branch, m.trunk, m.input_scale, params, tasks, fam, ctx,
                        b, e);
}

inline void check_model(const MhPinnModel& m, const TaskFamily&,
                        std::span<const TaskInstance> tasks) {
  if (m.n_tasks != tasks.size())
    throw ContractViolation("objective: model head count != task count");
}

inline void check_model(const PiDonModel& m, const TaskFamily& fam,
                        std::span<const TaskInstance>) {
  if (m.branch.input_dim != fam.n_sensors())
    throw ContractViolation("objective: branch input != sensor count");
}

}  // namespace detail

// Loss components of one evaluation. `total` is always assembled as
// weights.residual * residual + weights.boundary * boundary
// + weights.nwidth * knw, so the decomposition is exact by construction.
struct MultitaskEvalOut {
  double residual = 0.0;  // sum over tasks of mean-square PDE residual
  double boundary = 0.0;  // sum over tasks of mean-square boundary mismatch
  double knw = 0.0;       // worst-case-term two-norm, when present
  double total = 0.0;
};

// Multitask physics loss over a family grid, evaluated blockwise: the grid is
// cut into fixed point ranges, each block records its own tape and runs its
// own backward sweeps, and blocks combine in index order. Results are
// bit-identical for any thread count because the partition never depends on
// scheduling. Optional worst-case terms ride on the same per-point basis
// recordings.
//
// Holds references to the model, family, tasks, and pool; all must outlive
// the objective.
template <class Model>
class MultitaskObjective {
 public:
  MultitaskObjective(const Model& model, const TaskFamily& fam,
                     std::span<const TaskInstance> tasks, LossWeights weights,
                     ThreadPool& pool, std::size_t block_points = 64)
      : model_(model),
        fam_(fam),
        tasks_(tasks),
        weights_(weights),
        pool_(pool),
        block_points_(block_points) {
    if (block_points_ == 0)
      throw ContractViolation("objective: block_points must be positive");
    if (tasks.empty()) throw ContractViolation("objective: no tasks");
    detail::check_model(model, fam, tasks);
    fam.validate();

    const std::size_t p_count = fam_.grid.size();
    n_interior_blocks_ = (p_count + block_points_ - 1) / block_points_;
    n_model_ = model_.params.values.size();

    f_cache_ = Matrix(tasks.size(), p_count);
    for (std::size_t t = 0; t < tasks.size(); ++t)
      for (std::size_t p = 0; p < p_count; ++p)
        f_cache_(t, p) = tasks[t].f(fam_.grid.point(p));
    bnd_cache_ = Matrix(tasks.size(), fam_.n_boundary());
    for (std::size_t t = 0; t < tasks.size(); ++t)
      for (std::size_t p = 0; p < fam_.n_boundary(); ++p)
        bnd_cache_(t, p) = tasks[t].u(fam_.boundary_point(p));

    modes_ = mode_matrix(fam_);
    box_ = CoefficientBox{fam_.coeff_lo, fam_.coeff_hi, fam_.n_modes};
  }

  std::size_t n_params() const { return n_model_; }
  std::size_t n_basis() const { return model_.n_basis(); }

  // Physics-only loss and gradient; x and grad sized n_params().
  double physics(std::span<const double> x, std::span<double> grad,
                 MultitaskEvalOut* parts = nullptr) const {
    require_size(x, n_model_, "physics");
    require_size(grad, n_model_, "physics grad");
    std::vector<BlockOut> outs;
    run_blocks(x, Mode::physics, {}, outs);
    MultitaskEvalOut o = assemble(outs, grad);
    if (parts) *parts = o;
    return o.total;
  }

  // Physics plus weights.nwidth * ||u_star - sum_j w2_j phi_j||_2 over the
  // grid, with x = [model params | w2]. The appended weights are the only new
  // learnables the worst-case term brings in.
  double with_frozen_worst_case(std::span<const double> u_star,
                                std::span<const double> x, std::span<double> grad,
                                MultitaskEvalOut* parts = nullptr) const {
    require_size(u_star, fam_.grid.size(), "u_star");
    require_size(x, n_model_ + n_basis(), "frozen x");
    require_size(grad, x.size(), "frozen grad");
    std::vector<BlockOut> outs;
    run_blocks(x, Mode::frozen, u_star, outs);
    MultitaskEvalOut o = assemble(outs, grad);
    if (parts) *parts = o;
    return o.total;
  }

  // One simultaneous-training evaluation: the model gradient sees the full
  // weighted loss, the two worst-case agents see the unweighted two-norm.
  // x = params only; raw and w2 are the agents' own parameters.
  MultitaskEvalOut tri(std::span<const double> params, std::span<const double> raw,
                       std::span<const double> w2, std::span<double> g_params,
                       std::span<double> g_raw, std::span<double> g_w2) const {
    require_size(params, n_model_, "tri params");
    require_size(raw, fam_.n_modes, "tri raw");
    require_size(w2, n_basis(), "tri w2");
    require_size(g_params, n_model_, "tri g_params");
    require_size(g_raw, raw.size(), "tri g_raw");
    require_size(g_w2, w2.size(), "tri g_w2");

    std::vector<double> x(params.size() + raw.size() + w2.size());
    std::copy(params.begin(), params.end(), x.begin());
    std::copy(raw.begin(), raw.end(), x.begin() + params.size());
    std::copy(w2.begin(), w2.end(), x.begin() + params.size() + raw.size());

    std::vector<BlockOut> outs;
    run_blocks(x, Mode::agents, {}, outs);

    MultitaskEvalOut o;
    std::fill(g_params.begin(), g_params.end(), 0.0);
    std::fill(g_raw.begin(), g_raw.end(), 0.0);
    std::fill(g_w2.begin(), g_w2.end(), 0.0);
    double s_knw = 0.0;
    const double wr = weights_.residual / static_cast<double>(fam_.grid.size());
    const double wb = weights_.boundary / static_cast<double>(fam_.n_boundary());
    for (std::size_t b = 0; b < outs.size(); ++b) {
      const bool bnd = b + 1 == outs.size();
      if (bnd)
        o.boundary = outs[b].s_phys / static_cast<double>(fam_.n_boundary());
      else
        o.residual += outs[b].s_phys;
      axpy(bnd ? wb : wr, std::span<const double>(outs[b].g_phys).first(n_model_),
           g_params);
      s_knw += outs[b].s_knw;
    }
    o.residual /= static_cast<double>(fam_.grid.size());
    o.knw = std::sqrt(s_knw);
    if (o.knw > 0.0) {
      const double chain = 0.5 / o.knw;
      for (std::size_t b = 0; b + 1 < outs.size(); ++b) {
        const auto& g = outs[b].g_knw;
        if (weights_.nwidth != 0.0)
          axpy(weights_.nwidth * chain, std::span<const double>(g).first(n_model_),
               g_params);
        for (std::size_t k = 0; k < raw.size(); ++k)
          g_raw[k] += chain * g[n_model_ + k];
        for (std::size_t j = 0; j < w2.size(); ++j)
          g_w2[j] += chain * g[n_model_ + raw.size() + j];
      }
    }
    o.total = weights_.residual * o.residual + weights_.boundary * o.boundary +
              weights_.nwidth * o.knw;
    return o;
  }

  Objective physics_objective() const {
    return [this](std::span<const double> x, std::span<double> g) {
      return physics(x, g);
    };
  }

  Objective frozen_objective(std::vector<double> u_star) const {
    return [this, u = std::move(u_star)](std::span<const double> x,
                                         std::span<double> g) {
      return with_frozen_worst_case(u, x, g);
    };
  }

 private:
  enum class Mode { physics, frozen, agents };

  struct BlockOut {
    double s_phys = 0.0;
    double s_knw = 0.0;
    std::vector<double> g_phys;
    std::vector<double> g_knw;
  };

  static void require_size(std::span<const double> s, std::size_t n,
                           const char* what) {
    if (s.size() != n)
      throw ContractViolation(std::string("objective: bad size for ") + what);
  }
  static void require_size(std::span<double> s, std::size_t n, const char* what) {
    require_size(std::span<const double>(s), n, what);
  }

  static void extract(Tape& tape, std::span<const Value> vars,
                      std::vector<double>& g) {
    g.resize(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) g[i] = tape.adj(vars[i]);
    for (double v : g) {
      if (!std::isfinite(v)) {
        tape.check_finite_adjoints();
        throw NumericalError("non-finite gradient");
      }
    }
  }

  void run_blocks(std::span<const double> x, Mode mode,
                  std::span<const double> u_star,
                  std::vector<BlockOut>& outs) const {
    const std::size_t nb = n_interior_blocks_ + 1;
    outs.assign(nb, {});
    pool_.run(nb, [&](std::size_t bi) {
      Tape& tape = detail::tl_tape();
      tape.reset();
      std::vector<Value> vars;
      vars.reserve(x.size());
      for (double v : x) vars.push_back(tape.var(v));
      const std::span<const Value> all(vars);
      const std::span<const Value> mvars = all.first(n_model_);
      TapeCtx ctx{&tape};
      BlockOut& out = outs[bi];

      if (bi + 1 == nb) {
        auto eval = detail::make_eval(model_, mvars, tasks_, fam_, ctx, 0, 0);
        Value s = tape.zero();
        for (std::size_t t = 0; t < tasks_.size(); ++t)
          for (std::size_t p = 0; p < fam_.n_boundary(); ++p)
            s = s + sq(eval.boundary(t, p) - ctx.c(bnd_cache_(t, p)));
        tape.check_finite_value(s);
        tape.backward(s);
        out.s_phys = tape.val(s);
        extract(tape, all, out.g_phys);
        return;
      }

      const std::size_t begin = bi * block_points_;
      const std::size_t end =
          std::min(begin + block_points_, fam_.grid.size());
      auto eval = detail::make_eval(model_, mvars, tasks_, fam_, ctx, begin, end);

      Value s = tape.zero();
      for (std::size_t t = 0; t < tasks_.size(); ++t) {
        for (std::size_t p = begin; p < end; ++p) {
          PointEval<Value> e = eval.interior(t, p);
          s = s + sq(pde_residual(fam_.pde, fam_.diffusion, e,
                                  ctx.c(f_cache_(t, p))));
        }
      }
      tape.check_finite_value(s);
      tape.backward(s);
      out.s_phys = tape.val(s);
      extract(tape, all, out.g_phys);

      if (mode == Mode::physics) return;

      std::vector<Value> c;
      if (mode == Mode::agents) {
        auto raw_v = all.subspan(n_model_, fam_.n_modes);
        c = box_.bound(raw_v, ctx);
      }
      const std::span<const Value> w2_v =
          all.subspan(x.size() - model_.n_basis(), model_.n_basis());
      Value sk = tape.zero();
      for (std::size_t p = begin; p < end; ++p) {
        Value u_c = tape.zero();
        if (mode == Mode::agents) {
          for (std::size_t k = 0; k < fam_.n_modes; ++k)
            u_c = u_c + modes_(k, p) * c[k];
        } else {
          u_c = ctx.c(u_star[p]);
        }
        auto h = eval.basis(p);
        Value ut = ctx.zero();
        for (std::size_t j = 0; j < h.size(); ++j)
          ut = detail::muladd(w2_v[j], h[j], ut);
        sk = sk + sq(u_c - ut);
      }
      tape.check_finite_value(sk);
      tape.backward(sk);
      out.s_knw = tape.val(sk);
      extract(tape, all, out.g_knw);
    });
  }

  // Block order is fixed, so the reduction below is deterministic no matter
  // how blocks were scheduled.
  MultitaskEvalOut assemble(const std::vector<BlockOut>& outs,
                            std::span<double> grad) const {
    MultitaskEvalOut o;
    std::fill(grad.begin(), grad.end(), 0.0);
    const double wr = weights_.residual / static_cast<double>(fam_.grid.size());
    const double wb = weights_.boundary / static_cast<double>(fam_.n_boundary());
    double s_knw = 0.0;
    for (std::size_t b = 0; b < outs.size(); ++b) {
      const bool bnd = b + 1 == outs.size();
      if (bnd)
        o.boundary = outs[b].s_phys / static_cast<double>(fam_.n_boundary());
      else
        o.residual += outs[b].s_phys;
      axpy(bnd ? wb : wr, outs[b].g_phys, grad);
      s_knw += outs[b].s_knw;
    }
    o.residual /= static_cast<double>(fam_.grid.size());
    o.knw = std::sqrt(s_knw);
    if (o.knw > 0.0 && weights_.nwidth != 0.0) {
      const double chain = weights_.nwidth * 0.5 / o.knw;
      for (std::size_t b = 0; b + 1 < outs.size(); ++b)
        axpy(chain, outs[b].g_knw, grad);
    }
    o.total = weights_.residual * o.residual + weights_.boundary * o.boundary +
              weights_.nwidth * o.knw;
    return o;
  }

  const Model& model_;
  const TaskFamily& fam_;
  std::span<const TaskInstance> tasks_;
  LossWeights weights_;
  ThreadPool& pool_;
  std::size_t block_points_;
  std::size_t n_interior_blocks_ = 0;
  std::size_t n_model_ = 0;
  Matrix f_cache_, bnd_cache_, modes_;
  CoefficientBox box_;
};

}  // namespace knw
