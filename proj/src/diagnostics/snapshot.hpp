#pragma once

#include <string>
#include <vector>

#include "diagnostics/ledger.hpp"

namespace capsnet {

struct SnapshotRow {
  int epoch;
  std::size_t layer;
  LayerKind kind;
  std::size_t capsule;
  double activation;  // rounded to 9 significant digits
  bool dead;

  bool operator==(const SnapshotRow&) const = default;
};

struct SnapshotRecord {
  int epoch = 0;
  double threshold = kDeadThreshold;
  std::vector<SnapshotRow> rows;

  bool operator==(const SnapshotRecord&) const = default;
};

SnapshotRecord export_snapshot(const DeadCapsuleReport& report, int epoch);

/// CSV text: header "epoch,layer,layer_kind,capsule,activation,dead", one
/// row per capsule, activation printed with %.9g, dead as 0/1.
std::string serialize_snapshot(const SnapshotRecord& record);
/// Format error on a malformed header or row.
std::vector<SnapshotRow> parse_snapshot_rows(const std::string& text);

LayerKind parse_layer_kind(const std::string& name);

/// Rebuilds a report (verdicts and aggregates) from snapshot rows of one epoch.
DeadCapsuleReport report_from_rows(const std::vector<SnapshotRow>& rows, double threshold);

/// Rounds to 9 significant digits, the precision used in every text export.
double round_sig9(double v);

}  // namespace capsnet
