#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "diagnostics/ledger.hpp"
#include "diagnostics/snapshot.hpp"
#include "harness/config.hpp"
#include "layers/network.hpp"

namespace capsnet {

struct EpochMetrics {
  std::size_t epoch = 0;
  double margin = 0.0;
  double train_loss = 0.0;  // mean over minibatches
  double val_accuracy = 0.0;
  double val_avg_dead_count = 0.0;
  double val_avg_dead_fraction = 0.0;
  std::optional<double> train_avg_dead_fraction;  // only with train_telemetry
  double seconds = 0.0;
};

enum class RunStatus { completed, diverged, failed };
const char* to_string(RunStatus s);
RunStatus parse_run_status(const std::string& s);

struct RunRecord {
  std::string run_id;
  std::string config_json;  // echo of the experiment config
  std::string algorithm;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  std::size_t n_classes = 0;
  std::size_t parameter_count = 0;
  RunStatus status = RunStatus::completed;
  std::string message;  // divergence or failure detail
  std::vector<EpochMetrics> epochs;
  double test_accuracy = 0.0;
  DeadCapsuleReport test_report;
  std::vector<SnapshotRecord> snapshots;  // validation, one per recorded epoch
  double wall_seconds = 0.0;

  bool has_test() const { return !test_report.layers.empty(); }
};

std::string run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const std::string& text);
void save_run_record(const RunRecord& r, const std::filesystem::path& path);
RunRecord load_run_record(const std::filesystem::path& path);

std::string make_run_id(const std::string& algorithm, std::size_t depth, std::uint64_t seed);

/// Loads the configured dataset and returns normalized train/val/test splits.
DataSplits prepare_data(const ExperimentConfig& cfg);

NetworkSpec network_spec_for(const ExperimentConfig& cfg, const DataSplits& data, Algorithm algorithm,
                             std::size_t depth);

struct EvalResult {
  double accuracy = 0.0;
  DeadCapsuleReport report;
};

/// Forward-only pass over `d` feeding every capsule layer into a ledger.
EvalResult evaluate(Network& net, const Dataset& d, std::size_t batch_size, int epoch, double threshold);

/// One seeded run. Divergence is recorded in the result; other errors
/// propagate. When `trained` is given it receives the final network.
RunRecord train_run(const ExperimentConfig& cfg, const DataSplits& data, Algorithm algorithm, std::size_t depth,
                    std::uint64_t seed, std::unique_ptr<Network>* trained = nullptr);

/// Raises an io error when `outdir` cannot be created or written.
void ensure_writable_dir(const std::filesystem::path& outdir);

/// Single run from `cfg.algorithm`, `cfg.depth`, `cfg.seed`; persists the
/// record, a checkpoint and the reports under cfg.outdir.
RunRecord train(const ExperimentConfig& cfg);

}  // namespace capsnet
