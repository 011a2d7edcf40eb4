#pragma once

#include <vector>

#include "harness/trainer.hpp"

namespace capsnet {

/// One run per (algorithm, depth, seed) in cfg.algorithms x cfg.depths x
/// cfg.seeds, on cfg.jobs worker threads. A run that throws is recorded with
/// status "failed" and the sweep carries on. Records come back in grid order.
std::vector<RunRecord> sweep_runs(const ExperimentConfig& cfg, const DataSplits& data);

/// sweep_runs on the configured dataset, then persists every record and
/// emits the reports under cfg.outdir.
std::vector<RunRecord> sweep(const ExperimentConfig& cfg);

}  // namespace capsnet
