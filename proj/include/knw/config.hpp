#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "knw/errors.hpp"
#include "knw/exports.hpp"
#include "knw/models.hpp"
#include "knw/nwidth.hpp"
#include "knw/pipeline.hpp"
#include "knw/problems.hpp"

namespace knw {

// Full description of one experiment. Defaults are the reference settings:
// width 20, depth 2, 20 tasks, weights 1/10/10, epoch counts 1000 warm-up,
// 5000 refinement, 5000 metric, 1000 simultaneous warm-up, and the family
// grids of 512 points (1d) or 51x51 (2d).
struct ExperimentConfig {
  // [problem]
  std::string problem = "poisson1d";  // poisson1d | allen_cahn2d
  std::size_t tasks = 20;
  std::size_t grid_points = 0;  // 0 = family default (512, or 51 per axis)
  std::size_t sensors = 0;      // 0 = family default (50, or 11 per axis)
  std::size_t modes = 5;
  double coeff_lo = 0.0;
  double coeff_hi = 1.0;

  // [model]
  std::string architecture = "mh_pinn";  // mh_pinn | pi_don
  std::string activation = "sine";       // sine | tanh
  std::size_t width = 20;
  std::size_t depth = 2;

  // [training]
  std::size_t adam_epochs = 1000;
  std::size_t lbfgs_epochs = 5000;
  double adam_lr = 1e-3;
  double lambda_residual = 1.0;
  double lambda_boundary = 10.0;
  double lambda_nwidth = 10.0;
  std::size_t block_points = 64;

  // [metric]
  std::size_t bi_epochs = 5000;
  std::size_t tri_warmup_epochs = 1000;
  std::string metric_mode = "absolute";  // absolute | relative
  bool normalize_by_forcing = false;
  bool unit_ball = false;
  double c_lr_start = 1e-3;
  double c_lr_end = 1e-3;
  double w2_lr_start = 1e-3;
  double w2_lr_end = 1e-3;
  std::size_t trace_every = 100;

  // [run]
  std::uint64_t seed = 0;
  bool regularize = false;
  std::size_t threads = 1;
  std::string out = ".";
  std::string run_id;  // empty = derived from architecture/activation/problem/seed

  // [sweep]
  std::vector<std::size_t> sweep_widths = {20, 40, 60};
  std::vector<std::size_t> sweep_depths = {2, 3, 4};
  std::vector<std::size_t> sweep_epochs = {1000, 3000, 5000};
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && !s.empty();
}

inline bool parse_size(const std::string& s, std::size_t& out) {
  std::uint64_t v;
  if (!parse_u64(s, v)) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

inline bool parse_f64(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

inline bool parse_size_list(const std::string& s, std::vector<std::size_t>& out) {
  std::vector<std::size_t> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v;
    if (!parse_size(trim(item), v)) return false;
    vals.push_back(v);
  }
  if (vals.empty()) return false;
  out = std::move(vals);
  return true;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

// Applies one section.key = value assignment; a failure is described in
// `errors` and the config left untouched for that key.
inline void apply_config_key(ExperimentConfig& c, const std::string& section,
                             const std::string& key, const std::string& value,
                             std::vector<std::string>& errors) {
  const std::string where = section + "." + key;
  auto bad = [&](const char* kind) {
    errors.push_back(where + ": expected " + kind + ", got '" + value + "'");
  };
  auto set_size = [&](std::size_t& field) {
    if (!parse_size(value, field)) bad("a non-negative integer");
  };
  auto set_f64 = [&](double& field) {
    if (!parse_f64(value, field)) bad("a number");
  };
  auto set_bool = [&](bool& field) {
    if (!parse_bool(value, field)) bad("true or false");
  };
  auto set_list = [&](std::vector<std::size_t>& field) {
    if (!parse_size_list(value, field)) bad("a comma-separated integer list");
  };

  if (section == "problem") {
    if (key == "family") c.problem = value;
    else if (key == "tasks") set_size(c.tasks);
    else if (key == "grid_points") set_size(c.grid_points);
    else if (key == "sensors") set_size(c.sensors);
    else if (key == "modes") set_size(c.modes);
    else if (key == "coeff_lo") set_f64(c.coeff_lo);
    else if (key == "coeff_hi") set_f64(c.coeff_hi);
    else errors.push_back(where + ": unknown key");
  } else if (section == "model") {
    if (key == "architecture") c.architecture = value;
    else if (key == "activation") c.activation = value;
    else if (key == "width") set_size(c.width);
    else if (key == "depth") set_size(c.depth);
    else errors.push_back(where + ": unknown key");
  } else if (section == "training") {
    if (key == "adam_epochs") set_size(c.adam_epochs);
    else if (key == "lbfgs_epochs") set_size(c.lbfgs_epochs);
    else if (key == "adam_lr") set_f64(c.adam_lr);
    else if (key == "lambda_residual") set_f64(c.lambda_residual);
    else if (key == "lambda_boundary") set_f64(c.lambda_boundary);
    else if (key == "lambda_nwidth") set_f64(c.lambda_nwidth);
    else if (key == "block_points") set_size(c.block_points);
    else errors.push_back(where + ": unknown key");
  } else if (section == "metric") {
    if (key == "bi_epochs") set_size(c.bi_epochs);
    else if (key == "tri_warmup_epochs") set_size(c.tri_warmup_epochs);
    else if (key == "mode") c.metric_mode = value;
    else if (key == "normalize_by_forcing") set_bool(c.normalize_by_forcing);
    else if (key == "unit_ball") set_bool(c.unit_ball);
    else if (key == "c_lr_start") set_f64(c.c_lr_start);
    else if (key == "c_lr_end") set_f64(c.c_lr_end);
    else if (key == "w2_lr_start") set_f64(c.w2_lr_start);
    else if (key == "w2_lr_end") set_f64(c.w2_lr_end);
    else if (key == "trace_every") set_size(c.trace_every);
    else errors.push_back(where + ": unknown key");
  } else if (section == "run") {
    if (key == "seed") {
      if (!parse_u64(value, c.seed)) bad("a non-negative integer");
    } else if (key == "regularize") set_bool(c.regularize);
    else if (key == "threads") set_size(c.threads);
    else if (key == "out") c.out = value;
    else if (key == "run_id") c.run_id = value;
    else errors.push_back(where + ": unknown key");
  } else if (section == "sweep") {
    if (key == "widths") set_list(c.sweep_widths);
    else if (key == "depths") set_list(c.sweep_depths);
    else if (key == "epochs") set_list(c.sweep_epochs);
    else errors.push_back(where + ": unknown key");
  } else {
    errors.push_back(where + ": unknown section");
  }
}

}  // namespace detail

// Reads key = value lines grouped under [section] headers into `cfg`.
// Unknown keys, malformed lines, and unparsable values are all collected and
// reported together.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::vector<std::string> errors;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        errors.push_back("line " + std::to_string(line_no) +
                         ": unterminated section header");
        continue;
      }
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (section.empty()) {
      errors.push_back("line " + std::to_string(line_no) +
                       ": key outside any [section]");
      continue;
    }
    detail::apply_config_key(cfg, section, key, value, errors);
  }
  if (!errors.empty()) {
    std::string msg = "config file " + path + ":";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

// Cross-field validation; every offending field is listed in one error.
inline void validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(c.problem == "poisson1d" || c.problem == "allen_cahn2d",
        "problem.family: must be poisson1d or allen_cahn2d");
  check(c.architecture == "mh_pinn" || c.architecture == "pi_don",
        "model.architecture: must be mh_pinn or pi_don");
  check(c.activation == "sine" || c.activation == "tanh",
        "model.activation: must be sine or tanh");
  check(c.metric_mode == "absolute" || c.metric_mode == "relative",
        "metric.mode: must be absolute or relative");
  check(c.tasks >= 1, "problem.tasks: must be at least 1");
  check(c.modes >= 1, "problem.modes: must be at least 1");
  check(c.coeff_lo < c.coeff_hi, "problem.coeff_lo/coeff_hi: must satisfy lo < hi");
  check(c.grid_points == 0 || c.grid_points >= 2,
        "problem.grid_points: must be 0 (default) or at least 2");
  check(c.sensors == 0 || c.sensors >= 2,
        "problem.sensors: must be 0 (default) or at least 2");
  check(c.width >= 1, "model.width: must be at least 1");
  check(c.depth >= 1, "model.depth: must be at least 1");
  check(c.bi_epochs >= 1, "metric.bi_epochs: must be at least 1");
  check(c.tri_warmup_epochs >= 1, "metric.tri_warmup_epochs: must be at least 1");
  check(!(c.metric_mode == "relative" && c.normalize_by_forcing),
        "metric.mode/normalize_by_forcing: the relative objective already "
        "normalizes; combining both is not meaningful");
  check(c.threads >= 1, "run.threads: must be at least 1");
  check(c.block_points >= 1, "training.block_points: must be at least 1");
  check(!c.sweep_widths.empty(), "sweep.widths: must not be empty");
  check(!c.sweep_depths.empty(), "sweep.depths: must not be empty");
  check(!c.sweep_epochs.empty(), "sweep.epochs: must not be empty");
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

inline std::string resolved_run_id(const ExperimentConfig& c) {
  if (!c.run_id.empty()) return c.run_id;
  std::string id = c.architecture + "_" + c.activation + "_" + c.problem + "_s" +
                   std::to_string(c.seed);
  if (c.regularize) id += "_reg";
  return id;
}

// Canonical echo of the fully resolved config; feeding the output back via
// --config reproduces the run exactly.
inline std::string print_config(const ExperimentConfig& c) {
  std::string s;
  auto kv = [&](const char* k, const std::string& v) {
    s += std::string(k) + " = " + v + "\n";
  };
  auto kn = [&](const char* k, std::size_t v) { kv(k, std::to_string(v)); };
  auto kf = [&](const char* k, double v) { kv(k, format_double(v)); };
  auto kb = [&](const char* k, bool v) { kv(k, v ? "true" : "false"); };

  s += "[problem]\n";
  kv("family", c.problem);
  kn("tasks", c.tasks);
  kn("grid_points", c.grid_points);
  kn("sensors", c.sensors);
  kn("modes", c.modes);
  kf("coeff_lo", c.coeff_lo);
  kf("coeff_hi", c.coeff_hi);
  s += "\n[model]\n";
  kv("architecture", c.architecture);
  kv("activation", c.activation);
  kn("width", c.width);
  kn("depth", c.depth);
  s += "\n[training]\n";
  kn("adam_epochs", c.adam_epochs);
  kn("lbfgs_epochs", c.lbfgs_epochs);
  kf("adam_lr", c.adam_lr);
  kf("lambda_residual", c.lambda_residual);
  kf("lambda_boundary", c.lambda_boundary);
  kf("lambda_nwidth", c.lambda_nwidth);
  kn("block_points", c.block_points);
  s += "\n[metric]\n";
  kn("bi_epochs", c.bi_epochs);
  kn("tri_warmup_epochs", c.tri_warmup_epochs);
  kv("mode", c.metric_mode);
  kb("normalize_by_forcing", c.normalize_by_forcing);
  kb("unit_ball", c.unit_ball);
  kf("c_lr_start", c.c_lr_start);
  kf("c_lr_end", c.c_lr_end);
  kf("w2_lr_start", c.w2_lr_start);
  kf("w2_lr_end", c.w2_lr_end);
  kn("trace_every", c.trace_every);
  s += "\n[run]\n";
  kv("seed", std::to_string(c.seed));
  kb("regularize", c.regularize);
  kn("threads", c.threads);
  kv("out", c.out);
  kv("run_id", resolved_run_id(c));
  s += "\n[sweep]\n";
  kv("widths", detail::join_sizes(c.sweep_widths));
  kv("depths", detail::join_sizes(c.sweep_depths));
  kv("epochs", detail::join_sizes(c.sweep_epochs));
  return s;
}

// Family, models, and pipeline settings resolved from a validated config.

inline TaskFamily make_family(const ExperimentConfig& c) {
  TaskFamily f;
  if (c.problem == "poisson1d")
    f = poisson_family(c.grid_points ? c.grid_points : 512,
                       c.sensors ? c.sensors : 50);
  else
    f = allen_cahn_family(c.grid_points ? c.grid_points : 51,
                          c.sensors ? c.sensors : 11);
  f.n_modes = c.modes;
  f.coeff_lo = c.coeff_lo;
  f.coeff_hi = c.coeff_hi;
  f.n_tasks = c.tasks;
  f.forcing_scale =
      detail::forcing_bound(f.pde, f.n_modes, f.coeff_lo, f.coeff_hi, f.diffusion);
  f.validate();
  return f;
}

inline Activation config_activation(const ExperimentConfig& c) {
  return c.activation == "sine" ? Activation::sine : Activation::tanh;
}

inline MhPinnModel make_mh_pinn_model(const ExperimentConfig& c,
                                      const TaskFamily& fam) {
  MLPSpec body;
  body.input_dim = fam.dim();
  body.width = c.width;
  body.depth = c.depth;
  body.output_dim = 0;
  body.activation = config_activation(c);
  Rng rng = Rng::stream(c.seed, Stream::model_init);
  return make_mh_pinn(body, c.tasks, rng);
}

inline PiDonModel make_pidon_model(const ExperimentConfig& c,
                                   const TaskFamily& fam) {
  MLPSpec branch;
  branch.input_dim = fam.n_sensors();
  branch.width = c.width;
  branch.depth = c.depth;
  branch.output_dim = c.width;  // one coefficient per trunk basis function
  branch.activation = config_activation(c);
  MLPSpec trunk;
  trunk.input_dim = fam.dim();
  trunk.width = c.width;
  trunk.depth = c.depth;
  trunk.output_dim = 0;
  trunk.activation = config_activation(c);
  Rng rng = Rng::stream(c.seed, Stream::model_init);
  return make_pidon(branch, trunk, fam.forcing_scale, rng);
}

inline PipelineConfig pipeline_config(const ExperimentConfig& c) {
  PipelineConfig p;
  p.weights.residual = c.lambda_residual;
  p.weights.boundary = c.lambda_boundary;
  p.weights.nwidth = c.lambda_nwidth;
  p.adam_epochs = c.adam_epochs;
  p.lbfgs_epochs = c.lbfgs_epochs;
  p.adam_lr = c.adam_lr;
  p.block_points = c.block_points;
  p.trace_every = c.trace_every;
  p.knw.epochs_bi = c.bi_epochs;
  p.knw.epochs_tri_warmup = c.tri_warmup_epochs;
  p.knw.mode = c.metric_mode == "relative" ? KnwConfig::Mode::relative
                                           : KnwConfig::Mode::absolute;
  p.knw.normalize_by_forcing = c.normalize_by_forcing;
  p.knw.unit_ball = c.unit_ball;
  p.knw.c_lr_start = c.c_lr_start;
  p.knw.c_lr_end = c.c_lr_end;
  p.knw.w2_lr_start = c.w2_lr_start;
  p.knw.w2_lr_end = c.w2_lr_end;
  p.knw.seed = c.seed;
  p.knw.trace_every = c.trace_every;
  p.knw.validate();
  return p;
}

inline SweepAxes sweep_axes(const ExperimentConfig& c) {
  SweepAxes a;
  a.widths = c.sweep_widths;
  a.depths = c.sweep_depths;
  a.epochs = c.sweep_epochs;
  return a;
}

}  // namespace knw
