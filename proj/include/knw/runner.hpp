#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "knw/checkpoint.hpp"
#include "knw/config.hpp"
#include "knw/exports.hpp"
#include "knw/metrics.hpp"

namespace knw {

inline std::filesystem::path ensure_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir = cfg.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " +
                        ec.message());
  return dir;
}

namespace detail {

// Worst-case function and its best reconstruction, tabulated for export.
inline void export_worst_case(const std::filesystem::path& path,
                              const TaskFamily& fam, const BasisMatrix& basis,
                              const KnwResult& metric) {
  std::vector<double> u_star =
      u_on_grid(make_instance(fam, metric.c_star), fam.grid);
  std::vector<double> u_tilde(fam.grid.size(), 0.0);
  for (std::size_t p = 0; p < fam.grid.size(); ++p)
    for (std::size_t j = 0; j < basis.n_basis(); ++j)
      u_tilde[p] += metric.w2_star[j] * basis.values(j, p);
  write_worst_case(path, fam.grid, u_star, u_tilde);
}

template <class Model>
RunReport train_and_export(Model model, const ExperimentConfig& cfg,
                           const TaskFamily& fam,
                           std::span<const TaskInstance> tasks) {
  ThreadPool pool(cfg.threads);
  PipelineConfig pcfg = pipeline_config(cfg);
  RunReport rep = base_report(model, cfg.seed, false);
  TrainResult tr = train_model(model, fam, tasks, pcfg, pool);
  rep.stages.push_back({"adam", tr.adam_seconds});
  rep.stages.push_back({"lbfgs", tr.lbfgs_seconds});
  rep.task_errors = task_errors(model, fam, tasks);
  rep.mean_error = mean(rep.task_errors);
  rep.std_error = stddev(rep.task_errors);
  // Training alone does not evaluate the worst case.
  rep.knw_abs = std::numeric_limits<double>::quiet_NaN();
  rep.knw_rel = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : rep.stages) rep.runtime_seconds += s.seconds;

  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  save_checkpoint(model, (dir / (id + "_model.ckpt")).string());
  write_report(dir / (id + "_report.csv"), rep);
  write_train_trace(dir / (id + "_train_trace.csv"), tr);
  write_violin(dir / (id + "_violin.csv"), {&rep, 1});
  write_runtime(dir / (id + "_runtime.csv"), rep);
  return rep;
}

template <class Model>
RunReport regularize_and_export(Model model, const ExperimentConfig& cfg,
                                const TaskFamily& fam,
                                std::span<const TaskInstance> tasks) {
  ThreadPool pool(cfg.threads);
  PipelineConfig pcfg = pipeline_config(cfg);
  KnwResult metric;
  RunReport rep =
      run_regularized(model, fam, tasks, pcfg, cfg.seed, pool, &metric);

  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  save_checkpoint(model, (dir / (id + "_model.ckpt")).string());
  write_report(dir / (id + "_report.csv"), rep);
  write_violin(dir / (id + "_violin.csv"), {&rep, 1});
  write_metric_summary(dir / (id + "_metric.csv"), metric);
  write_metric_trace(dir / (id + "_metric_trace.csv"), metric);
  BasisMatrix basis = extract_basis(model, fam.grid);
  export_worst_case(dir / (id + "_worstcase.csv"), fam, basis, metric);
  write_runtime(dir / (id + "_runtime.csv"), rep);
  return rep;
}

inline BasisMatrix basis_from_checkpoint(const AnyModel& any, const Grid& grid) {
  return std::visit([&](const auto& m) { return extract_basis(m, grid); }, any);
}

// A stored model feeds exports whose names and labels come from the config,
// so the two must describe the same architecture and activation.
inline void check_checkpoint_labels(const AnyModel& any,
                                    const ExperimentConfig& cfg,
                                    const std::string& path) {
  const bool holds_mh = std::holds_alternative<MhPinnModel>(any);
  const std::string stored = holds_mh ? "mh_pinn" : "pi_don";
  if (stored != cfg.architecture)
    throw ArchitectureMismatch("checkpoint " + path + " holds " + stored +
                               " but the config asks for " + cfg.architecture);
  const Activation stored_act = holds_mh
                                    ? std::get<MhPinnModel>(any).body.activation
                                    : std::get<PiDonModel>(any).trunk.activation;
  if (activation_name(stored_act) != cfg.activation)
    throw ArchitectureMismatch("checkpoint " + path + " holds a " +
                               activation_name(stored_act) +
                               " model but the config asks for " +
                               cfg.activation);
}

}  // namespace detail

// Trains on the sampled family, saves the checkpoint, and reports per-task
// errors. The worst-case metric is not run; see cmd_metric / cmd_regularize.
inline RunReport cmd_train(const ExperimentConfig& cfg) {
  TaskFamily fam = make_family(cfg);
  auto tasks = sample_tasks(fam, cfg.tasks, cfg.seed);
  if (cfg.architecture == "mh_pinn")
    return detail::train_and_export(make_mh_pinn_model(cfg, fam), cfg, fam, tasks);
  return detail::train_and_export(make_pidon_model(cfg, fam), cfg, fam, tasks);
}

// Runs the worst-case metric on a stored model's frozen basis.
inline KnwResult cmd_metric(const ExperimentConfig& cfg,
                            const std::string& checkpoint_path) {
  AnyModel any = load_checkpoint(checkpoint_path);
  detail::check_checkpoint_labels(any, cfg, checkpoint_path);
  TaskFamily fam = make_family(cfg);
  BasisMatrix basis = detail::basis_from_checkpoint(any, fam.grid);
  KnwConfig kcfg = pipeline_config(cfg).knw;
  KnwResult metric = compute_metric(basis, fam, kcfg);

  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  write_metric_summary(dir / (id + "_metric.csv"), metric);
  write_metric_trace(dir / (id + "_metric_trace.csv"), metric);
  detail::export_worst_case(dir / (id + "_worstcase.csv"), fam, basis, metric);
  return metric;
}

// Full regularized flow: simultaneous warm-up, worst-case refinement, frozen
// worst-case refinement of the model, final metric.
inline RunReport cmd_regularize(const ExperimentConfig& cfg) {
  TaskFamily fam = make_family(cfg);
  auto tasks = sample_tasks(fam, cfg.tasks, cfg.seed);
  if (cfg.architecture == "mh_pinn")
    return detail::regularize_and_export(make_mh_pinn_model(cfg, fam), cfg, fam,
                                         tasks);
  return detail::regularize_and_export(make_pidon_model(cfg, fam), cfg, fam,
                                       tasks);
}

// Width/depth/epoch sweep of unregularized tanh multihead models.
inline std::vector<SweepCell> cmd_sweep(const ExperimentConfig& cfg) {
  TaskFamily fam = make_family(cfg);
  auto tasks = sample_tasks(fam, cfg.tasks, cfg.seed);
  ThreadPool pool(cfg.threads);
  auto cells = run_sweep(fam, tasks, sweep_axes(cfg), pipeline_config(cfg),
                         cfg.seed, pool);
  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  write_sweep(dir / (id + "_sweep.csv"), cells);
  write_sweep_runtime(dir / (id + "_sweep_runtime.csv"), cells);
  return cells;
}

// Normalized singular-value spectrum of a stored model's basis, plus the
// per-basis-function surface grids.
inline std::vector<double> cmd_svd(const ExperimentConfig& cfg,
                                   const std::string& checkpoint_path) {
  AnyModel any = load_checkpoint(checkpoint_path);
  detail::check_checkpoint_labels(any, cfg, checkpoint_path);
  TaskFamily fam = make_family(cfg);
  BasisMatrix basis = detail::basis_from_checkpoint(any, fam.grid);
  auto spectrum = svd_spectrum(basis);

  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  write_svd(dir / (id + "_svd.csv"), spectrum);
  write_basis_grids(dir, id, basis);
  return spectrum;
}

// Deterministic dump of the sampled task family.
inline std::vector<TaskInstance> cmd_tasks(const ExperimentConfig& cfg) {
  TaskFamily fam = make_family(cfg);
  auto tasks = sample_tasks(fam, cfg.tasks, cfg.seed);
  std::filesystem::path dir = ensure_out_dir(cfg);
  const std::string id = resolved_run_id(cfg);
  write_tasks(dir / (id + "_tasks.csv"), tasks);
  write_task_grid(dir / (id + "_task_grid.csv"), fam, tasks);
  return tasks;
}

// Runs a command body and maps failures onto the documented process exit
// codes, reporting the reason on stderr.
inline int run_command(const std::function<void()>& body) {
  try {
    body();
    return exit_ok;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const ArchitectureMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_io;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  }
}

}  // namespace knw
