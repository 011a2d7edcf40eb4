#include "harness/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "core/errors.hpp"

namespace capsnet {

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) raise(ErrorKind::format, "summary: bad number '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    raise(ErrorKind::format, "summary: bad integer '" + s + "'");
  return std::stoull(s);
}

void write_text(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::io, "cannot write " + p.string());
  f << content;
  if (!f) raise(ErrorKind::io, "write failed: " + p.string());
}

constexpr const char* kSummaryHeader =
    "run_id,algorithm,depth,seed,status,test_accuracy,avg_dead_count,avg_dead_fraction,epochs,parameter_count,"
    "wall_seconds";

// Mean over the seeds of each (algorithm, depth), skipping non-finite values.
std::vector<Series> per_depth_means(const std::vector<RunRecord>& records, double (*value)(const RunRecord&)) {
  std::map<std::string, std::map<std::size_t, std::pair<double, std::size_t>>> acc;
  for (const auto& r : records) {
    auto& cell = acc[r.algorithm][r.depth];
    const double v = value(r);
    if (std::isfinite(v)) {
      cell.first += v;
      ++cell.second;
    }
  }
  std::vector<Series> out;
  for (const auto& [alg, by_depth] : acc) {
    Series s{alg, {}};
    for (const auto& [depth, sum] : by_depth)
      if (sum.second > 0) s.points.emplace_back(static_cast<double>(depth), sum.first / sum.second);
    out.push_back(std::move(s));
  }
  return out;
}

double test_acc(const RunRecord& r) { return r.test_accuracy; }
double dead_count(const RunRecord& r) { return r.has_test() ? r.test_report.avg_dead_count : std::nan(""); }
double dead_fraction(const RunRecord& r) { return r.has_test() ? r.test_report.avg_dead_fraction : std::nan(""); }

std::string layer_label(LayerKind kind, std::size_t index) {
  switch (kind) {
    case LayerKind::primary: return "primary";
    case LayerKind::class_caps: return "class";
    default: return "conv " + std::to_string(index);
  }
}

}  // namespace

std::vector<RunRecord> canonical_order(std::vector<RunRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.algorithm, a.depth, a.seed) < std::tie(b.algorithm, b.depth, b.seed);
  });
  return records;
}

SummaryRow summary_row(const RunRecord& r) {
  SummaryRow s;
  s.run_id = r.run_id;
  s.algorithm = r.algorithm;
  s.depth = r.depth;
  s.seed = r.seed;
  s.status = to_string(r.status);
  s.test_accuracy = r.test_accuracy;
  s.avg_dead_count = dead_count(r);
  s.avg_dead_fraction = dead_fraction(r);
  s.epochs = r.epochs.size();
  s.parameter_count = r.parameter_count;
  s.wall_seconds = r.wall_seconds;
  return s;
}

std::string summary_csv(const std::vector<RunRecord>& records) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : canonical_order(records)) {
    const SummaryRow s = summary_row(r);
    out += s.run_id + "," + s.algorithm + "," + std::to_string(s.depth) + "," + std::to_string(s.seed) + "," +
           s.status + "," + num(s.test_accuracy) + "," + num(s.avg_dead_count) + "," + num(s.avg_dead_fraction) +
           "," + std::to_string(s.epochs) + "," + std::to_string(s.parameter_count) + "," + num(s.wall_seconds) +
           "\n";
  }
  return out;
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) raise(ErrorKind::format, "summary: unexpected header");
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) raise(ErrorKind::format, "summary: expected 11 fields in '" + line + "'");
    SummaryRow s;
    s.run_id = f[0];
    s.algorithm = f[1];
    s.depth = parse_uint(f[2]);
    s.seed = parse_uint(f[3]);
    s.status = f[4];
    s.test_accuracy = parse_num(f[5]);
    s.avg_dead_count = parse_num(f[6]);
    s.avg_dead_fraction = parse_num(f[7]);
    s.epochs = parse_uint(f[8]);
    s.parameter_count = parse_uint(f[9]);
    s.wall_seconds = parse_num(f[10]);
    rows.push_back(std::move(s));
  }
  return rows;
}

std::string metrics_csv(const RunRecord& r) {
  std::string out =
      "epoch,margin,train_loss,val_accuracy,val_avg_dead_count,val_avg_dead_fraction,train_avg_dead_fraction,"
      "seconds\n";
  for (const auto& e : r.epochs)
    out += std::to_string(e.epoch) + "," + num(e.margin) + "," + num(e.train_loss) + "," + num(e.val_accuracy) +
           "," + num(e.val_avg_dead_count) + "," + num(e.val_avg_dead_fraction) + "," +
           (e.train_avg_dead_fraction ? num(*e.train_avg_dead_fraction) : std::string()) + "," + num(e.seconds) +
           "\n";
  return out;
}

std::vector<CapsuleRow> capsule_rows(const SnapshotRecord& snap) {
  std::map<std::size_t, CapsuleRow> by_layer;
  std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> caps;
  for (const auto& row : snap.rows) {
    by_layer[row.layer].label = layer_label(row.kind, row.layer);
    caps[row.layer].emplace_back(row.capsule, row.activation);
  }
  std::vector<CapsuleRow> out;
  for (auto& [layer, row] : by_layer) {
    auto& c = caps[layer];
    std::sort(c.begin(), c.end());
    for (auto [i, a] : c) row.activations.push_back(a);
    out.push_back(std::move(row));
  }
  return out;
}

void emit_reports(const std::vector<RunRecord>& records, const std::filesystem::path& outdir) {
  if (records.empty()) raise(ErrorKind::contract, "emit_reports needs at least one run record");
  ensure_writable_dir(outdir);
  const auto ordered = canonical_order(records);
  write_text(outdir / "summary.csv", summary_csv(ordered));

  std::size_t n_classes = 0;
  for (const auto& r : ordered) n_classes = std::max(n_classes, r.n_classes);

  LineChart acc{"Test accuracy vs depth", "conv capsule layers", "test accuracy",
                per_depth_means(ordered, test_acc), 0.0, 1.0, std::nullopt, ""};
  if (n_classes > 0) {
    acc.reference_y = 1.0 / static_cast<double>(n_classes);
    acc.reference_label = "1/n";
  }
  write_text(outdir / "accuracy_vs_depth.svg", render_line_chart(acc));
  LineChart dc{"Dead capsules vs depth", "conv capsule layers", "avg dead capsules per layer",
               per_depth_means(ordered, dead_count), 0.0, std::nullopt, std::nullopt, ""};
  write_text(outdir / "dead_count_vs_depth.svg", render_line_chart(dc));
  LineChart df{"Dead capsule fraction vs depth", "conv capsule layers", "avg dead fraction",
               per_depth_means(ordered, dead_fraction), 0.0, 1.0, std::nullopt, ""};
  write_text(outdir / "dead_fraction_vs_depth.svg", render_line_chart(df));

  for (const auto& r : ordered) {
    const auto dir = outdir / "runs" / r.run_id;
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.csv", metrics_csv(r));
    if (r.snapshots.empty()) continue;
    std::vector<const SnapshotRecord*> chosen{&r.snapshots.front()};
    if (r.snapshots.size() > 1) chosen.push_back(&r.snapshots.back());
    for (const SnapshotRecord* s : chosen) {
      const std::string tag = "epoch" + std::to_string(s->epoch);
      write_text(dir / ("snapshot_" + tag + ".csv"), serialize_snapshot(*s));
      write_text(dir / ("capsules_" + tag + ".svg"),
                 render_capsule_grid(r.run_id + ", epoch " + std::to_string(s->epoch), capsule_rows(*s),
                                     s->threshold));
    }
  }
}

std::vector<RunRecord> load_run_records(const std::filesystem::path& outdir) {
  const auto runs = outdir / "runs";
  if (!std::filesystem::is_directory(runs)) raise(ErrorKind::io, "no runs directory under " + outdir.string());
  std::vector<RunRecord> out;
  for (const auto& entry : std::filesystem::directory_iterator(runs)) {
    const auto p = entry.path() / "run.json";
    if (std::filesystem::is_regular_file(p)) out.push_back(load_run_record(p));
  }
  if (out.empty()) raise(ErrorKind::io, "no run records under " + runs.string());
  return canonical_order(std::move(out));
}

std::vector<RunRecord> analyze(const std::filesystem::path& outdir) {
  auto records = load_run_records(outdir);
  emit_reports(records, outdir);
  return records;
}

}  // namespace capsnet
