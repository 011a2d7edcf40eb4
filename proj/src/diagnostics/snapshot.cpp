#include "diagnostics/snapshot.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "core/errors.hpp"

namespace capsnet {

namespace {

constexpr const char* kHeader = "epoch,layer,layer_kind,capsule,activation,dead";

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& field, const std::string& line) {
  std::istringstream in(field);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) raise(ErrorKind::format, "snapshot: bad field '" + field + "' in row '" + line + "'");
  return v;
}

}  // namespace

double round_sig9(double v) { return std::strtod(fmt9(v).c_str(), nullptr); }

LayerKind parse_layer_kind(const std::string& name) {
  for (auto k : {LayerKind::backbone, LayerKind::primary, LayerKind::conv_caps, LayerKind::class_caps})
    if (name == to_string(k)) return k;
  raise(ErrorKind::format, "unknown layer kind '" + name + "'");
}

SnapshotRecord export_snapshot(const DeadCapsuleReport& report, int epoch) {
  SnapshotRecord rec;
  rec.epoch = epoch;
  rec.threshold = report.threshold;
  for (const auto& l : report.layers)
    for (const auto& c : l.capsules)
      rec.rows.push_back({epoch, l.layer, l.kind, c.capsule, round_sig9(c.mean_activation), c.dead});
  return rec;
}

std::string serialize_snapshot(const SnapshotRecord& record) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : record.rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.layer) + "," + to_string(r.kind) + "," +
           std::to_string(r.capsule) + "," + fmt9(r.activation) + "," + (r.dead ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<SnapshotRow> parse_snapshot_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) raise(ErrorKind::format, "snapshot: missing header line");
  std::vector<SnapshotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) raise(ErrorKind::format, "snapshot: expected 6 fields in row '" + line + "'");
    if (f[5] != "0" && f[5] != "1") raise(ErrorKind::format, "snapshot: dead flag must be 0 or 1 in '" + line + "'");
    rows.push_back({parse_number<int>(f[0], line), parse_number<std::size_t>(f[1], line), parse_layer_kind(f[2]),
                    parse_number<std::size_t>(f[3], line), parse_number<double>(f[4], line), f[5] == "1"});
  }
  return rows;
}

DeadCapsuleReport report_from_rows(const std::vector<SnapshotRow>& rows, double threshold) {
  DeadCapsuleReport rep;
  rep.threshold = threshold;
  if (!rows.empty()) rep.epoch = rows.front().epoch;
  for (const auto& r : rows) {
    if (rep.layers.empty() || rep.layers.back().layer != r.layer) rep.layers.push_back({r.layer, r.kind, 0, {}, 0, 0.0});
    rep.layers.back().capsules.push_back({r.capsule, r.activation, r.dead});
  }
  rep.recompute_aggregates();
  return rep;
}

}  // namespace capsnet
