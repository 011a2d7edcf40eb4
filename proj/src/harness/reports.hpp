#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "harness/svg.hpp"
#include "harness/trainer.hpp"

namespace capsnet {

struct SummaryRow {
  std::string run_id;
  std::string algorithm;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  std::string status;
  double test_accuracy = 0.0;
  double avg_dead_count = 0.0;
  double avg_dead_fraction = 0.0;
  std::size_t epochs = 0;
  std::size_t parameter_count = 0;
  double wall_seconds = 0.0;
};

/// Records sorted by (algorithm, depth, seed); every report uses this order.
std::vector<RunRecord> canonical_order(std::vector<RunRecord> records);

SummaryRow summary_row(const RunRecord& r);
/// Numbers printed with 17 significant digits so the table parses back to
/// the exact record values; unavailable values print as "nan".
std::string summary_csv(const std::vector<RunRecord>& records);
std::vector<SummaryRow> parse_summary_csv(const std::string& text);

/// Per-epoch metrics of one run.
std::string metrics_csv(const RunRecord& r);

std::vector<CapsuleRow> capsule_rows(const SnapshotRecord& snap);

/// Writes under outdir: summary.csv, accuracy_vs_depth.svg,
/// dead_count_vs_depth.svg, dead_fraction_vs_depth.svg and, per run,
/// runs/<id>/metrics.csv plus capsule grids and snapshot tables for the
/// first and last epochs. Output depends only on the records.
/// Contract error on an empty list; io error when outdir is not writable.
void emit_reports(const std::vector<RunRecord>& records, const std::filesystem::path& outdir);

/// Reads every runs/*/run.json under outdir, in canonical order.
std::vector<RunRecord> load_run_records(const std::filesystem::path& outdir);

/// Re-emits the reports of the records persisted under outdir.
std::vector<RunRecord> analyze(const std::filesystem::path& outdir);

}  // namespace capsnet
