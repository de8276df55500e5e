#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "knw/runner.hpp"

namespace {

struct SubOptions {
  CLI::App* app = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* threads = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask physics training with a worst-case basis metric"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool print_cfg = false;

  auto add_common = [&](const std::string& name, const std::string& desc,
                        bool with_checkpoint) {
    SubOptions s;
    s.app = app.add_subcommand(name, desc);
    s.app->add_option("--config", config_path,
                      "configuration file ([section] key = value)");
    s.seed = s.app->add_option("--seed", seed, "override the global seed");
    s.out = s.app->add_option("--out", out_dir, "override the output directory");
    s.threads =
        s.app->add_option("--threads", threads, "override the worker thread count");
    s.app->add_flag("--print-config", print_cfg,
                    "echo the fully resolved configuration and exit");
    if (with_checkpoint)
      s.app->add_option("checkpoint", checkpoint, "model checkpoint path")
          ->required();
    return s;
  };

  SubOptions train =
      add_common("train", "train a model and save its checkpoint", false);
  SubOptions metric = add_common(
      "metric", "run the worst-case metric on a stored model's basis", true);
  SubOptions regularize = add_common(
      "regularize", "train with the worst-case regularization pipeline", false);
  SubOptions sweep =
      add_common("sweep", "width/depth/epoch sweep of unregularized models", false);
  SubOptions svd = add_common(
      "svd", "singular-value spectrum and surfaces of a stored basis", true);
  SubOptions tasks =
      add_common("tasks", "dump the sampled task family deterministically", false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? knw::exit_ok : knw::exit_config;
  }

  const SubOptions* chosen = nullptr;
  for (const SubOptions* s : {&train, &metric, &regularize, &sweep, &svd, &tasks})
    if (s->app->parsed()) chosen = s;

  return knw::run_command([&] {
    knw::ExperimentConfig cfg;
    if (!config_path.empty()) knw::load_config_file(cfg, config_path);
    if (chosen->seed->count()) cfg.seed = seed;
    if (chosen->out->count()) cfg.out = out_dir;
    if (chosen->threads->count()) cfg.threads = threads;
    cfg.regularize = chosen == &regularize;
    knw::validate_config(cfg);

    if (print_cfg) {
      std::cout << knw::print_config(cfg);
      return;
    }

    if (chosen == &train) {
      knw::RunReport rep = knw::cmd_train(cfg);
      std::cout << "trained " << knw::resolved_run_id(cfg) << ": mean error "
                << knw::format_double(rep.mean_error) << " over "
                << rep.task_errors.size() << " tasks\n";
    } else if (chosen == &metric) {
      knw::KnwResult r = knw::cmd_metric(cfg, checkpoint);
      std::cout << "metric " << knw::resolved_run_id(cfg) << ": absolute "
                << knw::format_double(r.value_abs) << ", relative "
                << knw::format_double(r.value_rel) << "\n";
    } else if (chosen == &regularize) {
      knw::RunReport rep = knw::cmd_regularize(cfg);
      std::cout << "regularized " << knw::resolved_run_id(cfg)
                << ": mean error " << knw::format_double(rep.mean_error)
                << ", worst case " << knw::format_double(rep.knw_rel) << "\n";
    } else if (chosen == &sweep) {
      auto cells = knw::cmd_sweep(cfg);
      std::size_t ok = 0;
      for (const auto& c : cells) ok += c.ok ? 1 : 0;
      std::cout << "sweep " << knw::resolved_run_id(cfg) << ": " << ok << "/"
                << cells.size() << " cells completed\n";
    } else if (chosen == &svd) {
      auto spectrum = knw::cmd_svd(cfg, checkpoint);
      std::cout << "svd " << knw::resolved_run_id(cfg) << ": "
                << spectrum.size() << " singular values, tail ratio "
                << knw::format_double(spectrum.back()) << "\n";
    } else {
      auto sampled = knw::cmd_tasks(cfg);
      std::cout << "tasks " << knw::resolved_run_id(cfg) << ": " << sampled.size()
                << " tasks written\n";
    }
  });
}
