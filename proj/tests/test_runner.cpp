#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "knw/runner.hpp"

using namespace knw;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "knw_runner_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ExperimentConfig small_config(const std::filesystem::path& out) {
  ExperimentConfig c;
  c.grid_points = 48;
  c.sensors = 8;
  c.tasks = 3;
  c.width = 4;
  c.depth = 1;
  c.adam_epochs = 8;
  c.lbfgs_epochs = 6;
  c.block_points = 16;
  c.bi_epochs = 40;
  c.tri_warmup_epochs = 8;
  c.trace_every = 4;
  c.seed = 5;
  c.threads = 2;
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("training runs write their full artifact set") {
  auto dir = fresh_dir("train");
  ExperimentConfig cfg = small_config(dir);
  RunReport rep = cmd_train(cfg);

  CHECK(rep.architecture == "mh_pinn");
  CHECK(rep.task_errors.size() == 3);
  CHECK_FALSE(rep.regularized);
  // Training alone never evaluates the worst case.
  CHECK(std::isnan(rep.knw_abs));

  std::string id = resolved_run_id(cfg);
  for (const char* suffix : {"_model.ckpt", "_report.csv", "_train_trace.csv",
                             "_violin.csv", "_runtime.csv"})
    CHECK(std::filesystem::exists(dir / (id + suffix)));
}

TEST_CASE("the metric recovers an embedded exact basis") {
  auto dir = fresh_dir("metric");
  ExperimentConfig cfg;
  cfg.grid_points = 128;
  cfg.width = 5;
  cfg.depth = 1;
  cfg.activation = "sine";
  cfg.bi_epochs = 1500;
  cfg.out = dir.string();
  TaskFamily fam = make_family(cfg);

  // A one-layer sine body with first-layer weight (j+1)*pi and zero bias
  // tabulates the solution modes themselves, so the best five-dimensional
  // approximation of any family member is exact and the metric must vanish.
  MhPinnModel m = make_mh_pinn_model(cfg, fam);
  auto w0 = m.params.block("body.w0");
  auto b0 = m.params.block("body.b0");
  REQUIRE(w0.size() == 5);
  for (std::size_t j = 0; j < 5; ++j) {
    w0[j] = static_cast<double>(j + 1) * std::numbers::pi;
    b0[j] = 0.0;
  }
  auto ckpt = dir / "exact.ckpt";
  save_checkpoint(m, ckpt.string());

  KnwResult r = cmd_metric(cfg, ckpt.string());
  CHECK(r.value_rel <= 1e-3);
  CHECK(r.c_star.size() == 5);

  std::string id = resolved_run_id(cfg);
  for (const char* suffix : {"_metric.csv", "_metric_trace.csv", "_worstcase.csv"})
    CHECK(std::filesystem::exists(dir / (id + suffix)));
}

TEST_CASE("the metric command rejects bad checkpoints up front") {
  auto dir = fresh_dir("metric_err");
  ExperimentConfig cfg = small_config(dir);
  CHECK_THROWS_AS(cmd_metric(cfg, (dir / "missing.ckpt").string()), IoError);

  TaskFamily fam = make_family(cfg);
  MhPinnModel m = make_mh_pinn_model(cfg, fam);
  auto ckpt = dir / "mh.ckpt";
  save_checkpoint(m, ckpt.string());
  ExperimentConfig wrong = cfg;
  wrong.architecture = "pi_don";
  CHECK_THROWS_AS(cmd_metric(wrong, ckpt.string()), ArchitectureMismatch);

  ExperimentConfig other_act = cfg;
  other_act.activation = cfg.activation == "tanh" ? "sine" : "tanh";
  CHECK_THROWS_AS(cmd_metric(other_act, ckpt.string()), ArchitectureMismatch);
  CHECK_THROWS_AS(cmd_svd(other_act, ckpt.string()), ArchitectureMismatch);
}

TEST_CASE("regularizing with zero weight matches train then metric") {
  // With the worst-case weight at zero the staged pipeline must collapse to
  // plain training: the warmup sees the same epoch count as Adam and the
  // refinement never feels the frozen worst case. The final metric then has
  // to agree bit for bit with an after-the-fact metric run on the training
  // checkpoint.
  auto dir_t = fresh_dir("compose_train");
  ExperimentConfig cfg_t = small_config(dir_t);
  cfg_t.lambda_nwidth = 0.0;
  RunReport rep_t = cmd_train(cfg_t);

  auto dir_r = fresh_dir("compose_reg");
  ExperimentConfig cfg_r = cfg_t;
  cfg_r.out = dir_r.string();
  cfg_r.regularize = true;
  RunReport rep_r = cmd_regularize(cfg_r);

  std::string id_t = resolved_run_id(cfg_t);
  KnwResult after = cmd_metric(cfg_t, (dir_t / (id_t + "_model.ckpt")).string());

  CHECK(same_bits(rep_r.task_errors, rep_t.task_errors));
  CHECK(same_bits(rep_r.mean_error, rep_t.mean_error));
  CHECK(same_bits(rep_r.knw_abs, after.value_abs));
  CHECK(same_bits(rep_r.knw_rel, after.value_rel));
  CHECK(rep_r.regularized);
  REQUIRE(rep_r.stages.size() == 4);
  CHECK(rep_r.stages[0].name == "tri_warmup");
  CHECK(rep_r.stages[3].name == "metric_final");
}

TEST_CASE("sweep rows reproduce their own summary columns") {
  auto dir = fresh_dir("sweep");
  ExperimentConfig cfg = small_config(dir);
  cfg.activation = "tanh";
  cfg.adam_epochs = 4;
  cfg.bi_epochs = 10;
  cfg.sweep_widths = {4, 6};
  cfg.sweep_depths = {1};
  cfg.sweep_epochs = {3};
  auto cells = cmd_sweep(cfg);
  REQUIRE(cells.size() == 2);

  std::string id = resolved_run_id(cfg);
  std::istringstream table(slurp(dir / (id + "_sweep.csv")));
  std::string line;
  std::getline(table, line);  // header
  for (const auto& cell : cells) {
    REQUIRE(std::getline(table, line));
    auto f = fields_of(line);
    REQUIRE(f.size() == 10);
    REQUIRE(cell.ok);
    CHECK(f[0] == std::to_string(cell.width));
    CHECK(f[3] == "ok");
    double mean_error = std::stod(f[4]);
    double knw_rel = std::stod(f[7]);
    double rel_diff = std::stod(f[8]);
    CHECK(same_bits(mean_error, cell.report.mean_error));
    // Every row carries enough to recompute its own derived column.
    CHECK(same_bits(rel_diff, (knw_rel - mean_error) / knw_rel));
  }
}

TEST_CASE("the singular value command reports ratios from one downward") {
  auto dir = fresh_dir("svd");
  ExperimentConfig cfg = small_config(dir);
  TaskFamily fam = make_family(cfg);
  MhPinnModel m = make_mh_pinn_model(cfg, fam);
  auto ckpt = dir / "m.ckpt";
  save_checkpoint(m, ckpt.string());

  auto spectrum = cmd_svd(cfg, ckpt.string());
  REQUIRE(spectrum.size() == 4);
  CHECK(spectrum[0] == 1.0);
  for (std::size_t k = 1; k < spectrum.size(); ++k)
    CHECK(spectrum[k] <= spectrum[k - 1]);

  std::string id = resolved_run_id(cfg);
  CHECK(std::filesystem::exists(dir / (id + "_svd.csv")));
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(std::filesystem::exists(dir / (id + "_basis_" + std::to_string(k) +
                                         ".csv")));
}

TEST_CASE("task exports are reproducible byte for byte") {
  auto dir = fresh_dir("tasks");
  ExperimentConfig cfg = small_config(dir);
  cmd_tasks(cfg);
  std::string id = resolved_run_id(cfg);
  std::string tasks1 = slurp(dir / (id + "_tasks.csv"));
  std::string grid1 = slurp(dir / (id + "_task_grid.csv"));
  cmd_tasks(cfg);
  CHECK(slurp(dir / (id + "_tasks.csv")) == tasks1);
  CHECK(slurp(dir / (id + "_task_grid.csv")) == grid1);
}

TEST_CASE("command errors map to stable exit codes") {
  CHECK(run_command([] {}) == 0);
  CHECK(run_command([] { throw ConfigError("x"); }) == 2);
  CHECK(run_command([] { throw ContractViolation("x"); }) == 2);
  CHECK(run_command([] { throw ArchitectureMismatch("x"); }) == 2);
  CHECK(run_command([] { throw NumericalError("x"); }) == 3);
  CHECK(run_command([] { throw std::runtime_error("x"); }) == 3);
  CHECK(run_command([] { throw IoError("x"); }) == 4);
  CHECK(run_command([] { throw FormatError("x"); }) == 4);
}
