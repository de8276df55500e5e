#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "knw/analysis.hpp"
#include "knw/models.hpp"
#include "knw/nwidth.hpp"
#include "knw/pipeline.hpp"
#include "knw/problems.hpp"

namespace knw {

// Shortest decimal form that round-trips to the same double, so every CSV
// re-imports to bit-identical values.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

// All exports go through here: write to a sibling temp file, then rename, so
// a run directory never holds half-written artifacts.
inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

// One-row summary of a run. Runtime lives in the separate runtime export so
// repeated runs of the same seed produce byte-identical summaries.
inline void write_report(const std::filesystem::path& path, const RunReport& r) {
  std::string s =
      "architecture,activation,regularized,seed,tasks,mean_error,std_error,"
      "knw_abs,knw_rel,relative_difference\n";
  s += r.architecture + "," + r.activation + ",";
  s += r.regularized ? "1" : "0";
  s += "," + std::to_string(r.seed) + "," + std::to_string(r.task_errors.size());
  s += "," + format_double(r.mean_error) + "," + format_double(r.std_error);
  s += "," + format_double(r.knw_abs) + "," + format_double(r.knw_rel);
  s += "," + format_double(r.relative_difference()) + "\n";
  write_text_atomic(path, s);
}

inline void write_runtime(const std::filesystem::path& path, const RunReport& r) {
  std::string s = "stage,seconds\n";
  for (const auto& st : r.stages)
    s += st.name + "," + format_double(st.seconds) + "\n";
  s += "total," + format_double(r.runtime_seconds) + "\n";
  write_text_atomic(path, s);
}

// Tidy per-task error rows plus one worst-case marker row per run
// (task_id -1, kind knw, value knw_rel), ready for violin plots.
inline void write_violin(const std::filesystem::path& path,
                         std::span<const RunReport> reports) {
  if (reports.empty()) throw ContractViolation("write_violin: no reports");
  std::string s = "architecture,seed,task_id,kind,value\n";
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < r.task_errors.size(); ++t)
      s += r.architecture + "," + std::to_string(r.seed) + "," +
           std::to_string(t) + ",task," + format_double(r.task_errors[t]) + "\n";
    s += r.architecture + "," + std::to_string(r.seed) + ",-1,knw," +
         format_double(r.knw_rel) + "\n";
  }
  write_text_atomic(path, s);
}

// Training history of both stages, one row per traced epoch.
inline void write_train_trace(const std::filesystem::path& path,
                              const TrainResult& tr) {
  std::string s = "stage,iter,value,grad_norm\n";
  for (const auto& row : tr.adam_trace)
    s += "adam," + std::to_string(row.iter) + "," + format_double(row.value) +
         "," + format_double(row.grad_norm) + "\n";
  for (const auto& row : tr.lbfgs.trace)
    s += "lbfgs," + std::to_string(row.iter) + "," + format_double(row.value) +
         "," + format_double(row.grad_norm) + "\n";
  write_text_atomic(path, s);
}

// One-row metric summary: final values, the worst-case coefficients, and the
// combination-weight norm.
inline void write_metric_summary(const std::filesystem::path& path,
                                 const KnwResult& r) {
  std::string s = "value_abs,value_rel";
  for (std::size_t k = 1; k <= r.c_star.size(); ++k)
    s += ",c_" + std::to_string(k);
  s += ",w2_norm\n";
  s += format_double(r.value_abs) + "," + format_double(r.value_rel);
  for (double c : r.c_star) s += "," + format_double(c);
  s += "," + format_double(norm2(r.w2_star)) + "\n";
  write_text_atomic(path, s);
}

// Metric optimization history: objective value, bounded coefficients, and the
// combination-weight norm per traced epoch.
inline void write_metric_trace(const std::filesystem::path& path,
                               const KnwResult& r) {
  std::string s = "epoch,objective";
  const std::size_t n = r.c_star.size();
  for (std::size_t k = 1; k <= n; ++k) s += ",c_" + std::to_string(k);
  s += ",w2_norm\n";
  for (const auto& row : r.trace) {
    s += std::to_string(row.epoch) + "," + format_double(row.value);
    for (double c : row.c) s += "," + format_double(c);
    s += "," + format_double(row.w2_norm) + "\n";
  }
  write_text_atomic(path, s);
}

// Worst-case function against its best basis reconstruction, pointwise over
// the grid; error is the signed difference u_star - u_tilde.
inline void write_worst_case(const std::filesystem::path& path, const Grid& grid,
                             std::span<const double> u_star,
                             std::span<const double> u_tilde) {
  if (u_star.size() != grid.size() || u_tilde.size() != grid.size())
    throw ContractViolation("write_worst_case: value count != grid size");
  std::string s = grid.dim == 1 ? "x,u_star,u_tilde,error\n"
                                : "x,y,u_star,u_tilde,error\n";
  for (std::size_t p = 0; p < grid.size(); ++p) {
    auto x = grid.point(p);
    for (std::size_t d = 0; d < grid.dim; ++d) {
      if (d) s += ",";
      s += format_double(x[d]);
    }
    s += "," + format_double(u_star[p]) + "," + format_double(u_tilde[p]);
    s += "," + format_double(u_star[p] - u_tilde[p]) + "\n";
  }
  write_text_atomic(path, s);
}

// One file per basis function: <run_id>_basis_<k>.csv. A 1d grid is a single
// line of nx values; a 2d grid has nx lines of ny values (x index outermost,
// matching the grid layout). Returns the written paths.
inline std::vector<std::filesystem::path> write_basis_grids(
    const std::filesystem::path& out_dir, const std::string& run_id,
    const BasisMatrix& basis) {
  const Grid& g = basis.grid;
  std::vector<std::filesystem::path> paths;
  for (std::size_t k = 0; k < basis.n_basis(); ++k) {
    std::string s;
    const std::size_t cols = g.dim == 1 ? g.nx : g.ny;
    for (std::size_t p = 0; p < g.size(); ++p) {
      s += format_double(basis.values(k, p));
      s += (p % cols + 1 == cols) ? "\n" : ",";
    }
    std::filesystem::path path =
        out_dir / (run_id + "_basis_" + std::to_string(k) + ".csv");
    write_text_atomic(path, s);
    paths.push_back(std::move(path));
  }
  return paths;
}

// Sweep table, one row per cell; failed cells carry nan values and the
// failure message. Cell runtimes go to the companion runtime export.
inline void write_sweep(const std::filesystem::path& path,
                        std::span<const SweepCell> cells) {
  std::string s =
      "width,depth,epochs,status,mean_error,std_error,knw_abs,knw_rel,"
      "relative_difference,message\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : cells) {
    s += std::to_string(c.width) + "," + std::to_string(c.depth) + "," +
         std::to_string(c.epochs) + ",";
    const RunReport& r = c.report;
    if (c.ok) {
      s += "ok," + format_double(r.mean_error) + "," + format_double(r.std_error);
      s += "," + format_double(r.knw_abs) + "," + format_double(r.knw_rel);
      s += "," + format_double(r.relative_difference()) + ",";
    } else {
      std::string n = format_double(nan);
      s += "error," + n + "," + n + "," + n + "," + n + "," + n + ",";
      s += csv_field(c.error);
    }
    s += "\n";
  }
  write_text_atomic(path, s);
}

inline void write_sweep_runtime(const std::filesystem::path& path,
                                std::span<const SweepCell> cells) {
  std::string s = "width,depth,epochs,runtime_seconds\n";
  for (const auto& c : cells)
    s += std::to_string(c.width) + "," + std::to_string(c.depth) + "," +
         std::to_string(c.epochs) + "," +
         format_double(c.ok ? c.report.runtime_seconds : 0.0) + "\n";
  write_text_atomic(path, s);
}

inline void write_svd(const std::filesystem::path& path,
                      std::span<const double> spectrum) {
  std::string s = "k,sigma_ratio\n";
  for (std::size_t k = 0; k < spectrum.size(); ++k)
    s += std::to_string(k + 1) + "," + format_double(spectrum[k]) + "\n";
  write_text_atomic(path, s);
}

// Sampled task coefficients, one row per task.
inline void write_tasks(const std::filesystem::path& path,
                        std::span<const TaskInstance> tasks) {
  if (tasks.empty()) throw ContractViolation("write_tasks: no tasks");
  std::string s = "task_id";
  for (std::size_t k = 1; k <= tasks[0].coeffs.size(); ++k)
    s += ",c_" + std::to_string(k);
  s += "\n";
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    s += std::to_string(t);
    for (double c : tasks[t].coeffs) s += "," + format_double(c);
    s += "\n";
  }
  write_text_atomic(path, s);
}

// Sampled solutions and forcings tabulated over the family grid.
inline void write_task_grid(const std::filesystem::path& path,
                            const TaskFamily& fam,
                            std::span<const TaskInstance> tasks) {
  std::string s = fam.dim() == 1 ? "task_id,x,u,f\n" : "task_id,x,y,u,f\n";
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t p = 0; p < fam.grid.size(); ++p) {
      auto x = fam.grid.point(p);
      s += std::to_string(t);
      for (std::size_t d = 0; d < fam.dim(); ++d) s += "," + format_double(x[d]);
      s += "," + format_double(tasks[t].u(x)) + "," + format_double(tasks[t].f(x));
      s += "\n";
    }
  }
  write_text_atomic(path, s);
}

}  // namespace knw
