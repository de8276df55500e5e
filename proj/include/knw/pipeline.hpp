#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "knw/adam.hpp"
#include "knw/lbfgs.hpp"
#include "knw/metrics.hpp"
#include "knw/models.hpp"
#include "knw/nwidth.hpp"
#include "knw/problems.hpp"
#include "knw/rng.hpp"
#include "knw/train.hpp"

namespace knw {

// Shared knobs of every training flow. The defaults are the reference
// experiment settings; anything the config file or CLI overrides lands here.
struct PipelineConfig {
  LossWeights weights;            // residual 1, boundary 10, nwidth 10
  std::size_t adam_epochs = 1000;
  std::size_t lbfgs_epochs = 5000;
  double adam_lr = 1e-3;
  std::size_t block_points = 64;
  std::size_t trace_every = 100;
  KnwConfig knw;                  // bi-opt 5000, tri warm-up 1000
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

// Everything one experiment reports: per-task accuracy, the worst-case
// metric, and where the time went.
struct RunReport {
  std::string architecture;  // "mh_pinn" | "pi_don"
  std::string activation;    // "sine" | "tanh"
  bool regularized = false;
  std::uint64_t seed = 0;
  std::vector<double> task_errors;  // relative l2 per task, task order
  double mean_error = 0.0;
  double std_error = 0.0;
  double knw_abs = 0.0;
  double knw_rel = 0.0;
  double runtime_seconds = 0.0;
  std::vector<StageTiming> stages;

  // Gap between the worst case and the sampled average, as a fraction of the
  // worst case.
  double relative_difference() const {
    return (knw_rel - mean_error) / knw_rel;
  }
};

struct TrainResult {
  std::vector<TraceRow> adam_trace;
  LbfgsResult lbfgs;
  double adam_seconds = 0.0;
  double lbfgs_seconds = 0.0;
};

struct TriResult {
  std::vector<double> raw;  // worst-case agent, unbounded coordinates
  std::vector<double> w2;   // combination agent
  std::vector<TraceRow> trace;
  double seconds = 0.0;
};

namespace detail {

class Stopwatch {
 public:
  double lap() {
    auto now = std::chrono::steady_clock::now();
    double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::string arch_tag(const MhPinnModel&) { return "mh_pinn"; }
inline std::string arch_tag(const PiDonModel&) { return "pi_don"; }

inline Activation model_activation(const MhPinnModel& m) {
  return m.body.activation;
}
inline Activation model_activation(const PiDonModel& m) {
  return m.trunk.activation;
}

inline std::vector<double> predict_task_grid(const MhPinnModel& m,
                                             std::span<const TaskInstance>,
                                             std::size_t task, const Grid& g) {
  return predict_grid(m, task, g);
}
inline std::vector<double> predict_task_grid(const PiDonModel& m,
                                             std::span<const TaskInstance> tasks,
                                             std::size_t task, const Grid& g) {
  return predict_grid(m, tasks[task], g);
}

}  // namespace detail

// Relative l2 error of every task's prediction over the family grid.
template <class Model>
std::vector<double> task_errors(const Model& model, const TaskFamily& fam,
                                std::span<const TaskInstance> tasks) {
  std::vector<double> errs;
  errs.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto pred = detail::predict_task_grid(model, tasks, i, fam.grid);
    errs.push_back(relative_l2(pred, u_on_grid(tasks[i], fam.grid)));
  }
  return errs;
}

// Standard two-stage physics training: Adam warm-up, then L-BFGS refinement.
// Updates the model parameters in place.
template <class Model>
TrainResult train_model(Model& model, const TaskFamily& fam,
                        std::span<const TaskInstance> tasks,
                        const PipelineConfig& cfg, ThreadPool& pool) {
  MultitaskObjective<Model> obj(model, fam, tasks, cfg.weights, pool,
                                cfg.block_points);
  Objective f = obj.physics_objective();
  TrainResult r;
  detail::Stopwatch watch;
  AdamConfig acfg;
  acfg.lr = cfg.adam_lr;
  r.adam_trace =
      adam_minimize(f, model.params.values, cfg.adam_epochs, acfg, cfg.trace_every);
  r.adam_seconds = watch.lap();
  LbfgsConfig lcfg;
  lcfg.max_iters = cfg.lbfgs_epochs;
  r.lbfgs = lbfgs_minimize(f, model.params.values, lcfg, cfg.trace_every);
  r.lbfgs_seconds = watch.lap();
  return r;
}

// Simultaneous warm-up: the model descends on the full weighted loss while
// the worst-case agents climb/descend the two-norm term, all three with their
// own Adam state, one evaluation per epoch. With a zero worst-case weight the
// agents stay frozen and the parameter trajectory is plain Adam training.
template <class Model>
TriResult tri_optimize(Model& model, const TaskFamily& fam,
                       std::span<const TaskInstance> tasks,
                       const PipelineConfig& cfg, std::uint64_t seed,
                       ThreadPool& pool) {
  MultitaskObjective<Model> obj(model, fam, tasks, cfg.weights, pool,
                                cfg.block_points);
  const std::size_t n = obj.n_params();
  const std::size_t n_modes = fam.n_modes;
  const std::size_t n_basis = obj.n_basis();

  TriResult r;
  r.raw.resize(n_modes);
  r.w2.assign(n_basis, 0.0);
  Rng rng = Rng::stream(seed, Stream::agent_init);
  for (auto& v : r.raw) v = 0.5 * rng.normal();

  AdamConfig acfg;
  acfg.lr = cfg.adam_lr;
  Adam opt_p(n, acfg), opt_raw(n_modes, acfg), opt_w2(n_basis, acfg);
  std::vector<double> g_p(n), g_raw(n_modes), g_w2(n_basis);
  const bool agents_on = cfg.weights.nwidth != 0.0;

  detail::Stopwatch watch;
  const std::size_t epochs = cfg.knw.epochs_tri_warmup;
  for (std::size_t e = 0; e < epochs; ++e) {
    MultitaskEvalOut o =
        obj.tri(model.params.values, r.raw, r.w2, g_p, g_raw, g_w2);
    if (cfg.trace_every && (e % cfg.trace_every == 0 || e + 1 == epochs))
      r.trace.push_back({e, o.total, norm_inf(g_p)});
    opt_p.step(model.params.values, g_p);
    if (agents_on) {
      for (auto& g : g_raw) g = -g;  // ascent on the worst case
      opt_raw.step(r.raw, g_raw);
      opt_w2.step(r.w2, g_w2);
    }
  }
  r.seconds = watch.lap();
  return r;
}

namespace detail {

template <class Model>
RunReport base_report(const Model& model, std::uint64_t seed, bool regularized) {
  RunReport rep;
  rep.architecture = arch_tag(model);
  rep.activation = activation_name(model_activation(model));
  rep.regularized = regularized;
  rep.seed = seed;
  return rep;
}

template <class Model>
void finish_report(RunReport& rep, const Model& model, const TaskFamily& fam,
                   std::span<const TaskInstance> tasks, const KnwResult& metric) {
  rep.task_errors = task_errors(model, fam, tasks);
  rep.mean_error = mean(rep.task_errors);
  rep.std_error = stddev(rep.task_errors);
  rep.knw_abs = metric.value_abs;
  rep.knw_rel = metric.value_rel;
  rep.runtime_seconds = 0.0;
  for (const auto& s : rep.stages) rep.runtime_seconds += s.seconds;
}

}  // namespace detail

// Plain flow: two-stage physics training, then the worst-case metric on the
// frozen basis. `metric_out`, when given, receives the full metric result
// (trace, c*, w2*) for exports.
template <class Model>
RunReport run_unregularized(Model& model, const TaskFamily& fam,
                            std::span<const TaskInstance> tasks,
                            const PipelineConfig& cfg, std::uint64_t seed,
                            ThreadPool& pool, KnwResult* metric_out = nullptr) {
  RunReport rep = detail::base_report(model, seed, false);
  TrainResult tr = train_model(model, fam, tasks, cfg, pool);
  rep.stages.push_back({"adam", tr.adam_seconds});
  rep.stages.push_back({"lbfgs", tr.lbfgs_seconds});

  detail::Stopwatch watch;
  KnwConfig kcfg = cfg.knw;
  kcfg.seed = seed;
  BasisMatrix basis = extract_basis(model, fam.grid);
  KnwResult metric = compute_metric(basis, fam, kcfg);
  rep.stages.push_back({"metric", watch.lap()});

  detail::finish_report(rep, model, fam, tasks, metric);
  if (metric_out) *metric_out = std::move(metric);
  return rep;
}

// Regularized flow, four stages: (1) simultaneous warm-up of model and
// worst-case agents; (2) with the body frozen, refine the worst case by
// bi-optimization, warm-started from the agents; (3) freeze the worst-case
// coefficients and L-BFGS the model together with the combination weights
// against physics + weighted distance to that frozen worst case; (4) rerun
// the metric on the refined basis, fresh agents, for reporting.
template <class Model>
RunReport run_regularized(Model& model, const TaskFamily& fam,
                          std::span<const TaskInstance> tasks,
                          const PipelineConfig& cfg, std::uint64_t seed,
                          ThreadPool& pool, KnwResult* metric_out = nullptr) {
  RunReport rep = detail::base_report(model, seed, true);

  TriResult tri = tri_optimize(model, fam, tasks, cfg, seed, pool);
  rep.stages.push_back({"tri_warmup", tri.seconds});

  detail::Stopwatch watch;
  KnwConfig kcfg = cfg.knw;
  kcfg.seed = seed;
  KnwInit warm{tri.raw, tri.w2};
  BasisMatrix basis = extract_basis(model, fam.grid);
  KnwResult refine = compute_metric(basis, fam, kcfg, &warm);
  rep.stages.push_back({"metric_refine", watch.lap()});

  TaskInstance worst = make_instance(fam, refine.c_star);
  std::vector<double> u_star = u_on_grid(worst, fam.grid);
  MultitaskObjective<Model> obj(model, fam, tasks, cfg.weights, pool,
                                cfg.block_points);
  std::vector<double> x(model.params.values.size() + obj.n_basis());
  std::copy(model.params.values.begin(), model.params.values.end(), x.begin());
  std::copy(refine.w2_star.begin(), refine.w2_star.end(),
            x.begin() + model.params.values.size());
  Objective f = obj.frozen_objective(std::move(u_star));
  LbfgsConfig lcfg;
  lcfg.max_iters = cfg.lbfgs_epochs;
  lbfgs_minimize(f, x, lcfg, cfg.trace_every);
  std::copy(x.begin(), x.begin() + model.params.values.size(),
            model.params.values.begin());
  rep.stages.push_back({"lbfgs", watch.lap()});

  BasisMatrix refined = extract_basis(model, fam.grid);
  KnwResult metric = compute_metric(refined, fam, kcfg);
  rep.stages.push_back({"metric_final", watch.lap()});

  detail::finish_report(rep, model, fam, tasks, metric);
  if (metric_out) *metric_out = std::move(metric);
  return rep;
}

}  // namespace knw
