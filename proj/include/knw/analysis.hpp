#pragma once

#include <exception>
#include <string>
#include <vector>

#include "knw/pipeline.hpp"

namespace knw {

struct SweepAxes {
  std::vector<std::size_t> widths = {20, 40, 60};
  std::vector<std::size_t> depths = {2, 3, 4};
  std::vector<std::size_t> epochs = {1000, 3000, 5000};
};

// One (width, depth, epochs) cell of the architecture sweep. A failed cell
// keeps its axes and the failure message; the report is only meaningful when
// ok is set.
struct SweepCell {
  std::size_t width = 0;
  std::size_t depth = 0;
  std::size_t epochs = 0;
  bool ok = false;
  std::string error;
  RunReport report;
};

// Trains one tanh multihead model per cell, unregularized, and reports the
// gap between the worst-case metric and the sampled mean. The epochs axis
// sets the refinement length of the second training stage; the warm-up stage
// keeps the base config's count. Cell failures are recorded and the sweep
// moves on. Cells run in a fixed width-major order, so the table layout
// never depends on timing.
inline std::vector<SweepCell> run_sweep(const TaskFamily& fam,
                                        std::span<const TaskInstance> tasks,
                                        const SweepAxes& axes,
                                        const PipelineConfig& base,
                                        std::uint64_t seed, ThreadPool& pool) {
  if (axes.widths.empty() || axes.depths.empty() || axes.epochs.empty())
    throw ContractViolation("run_sweep: empty axis");
  std::vector<SweepCell> cells;
  cells.reserve(axes.widths.size() * axes.depths.size() * axes.epochs.size());
  for (std::size_t w : axes.widths) {
    for (std::size_t d : axes.depths) {
      for (std::size_t e : axes.epochs) {
        SweepCell cell;
        cell.width = w;
        cell.depth = d;
        cell.epochs = e;
        try {
          MLPSpec body;
          body.input_dim = fam.dim();
          body.width = w;
          body.depth = d;
          body.output_dim = 0;
          body.activation = Activation::tanh;
          Rng rng = Rng::stream(seed, Stream::model_init);
          MhPinnModel model = make_mh_pinn(body, tasks.size(), rng);
          PipelineConfig cfg = base;
          cfg.lbfgs_epochs = e;
          cell.report = run_unregularized(model, fam, tasks, cfg, seed, pool);
          cell.ok = true;
        } catch (const std::exception& ex) {
          cell.error = ex.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace knw
