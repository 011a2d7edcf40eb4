#include "harness/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>

#include <json.hpp>

#include "core/errors.hpp"
#include "data/idx.hpp"
#include "data/synthetic.hpp"
#include "harness/loss.hpp"
#include "harness/optimizer.hpp"
#include "harness/reports.hpp"
#include "layers/checkpoint.hpp"

namespace capsnet {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); }

json report_to_json(const DeadCapsuleReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    json acts = json::array();
    for (const auto& c : l.capsules) acts.push_back(c.mean_activation);
    layers.push_back({{"layer", l.layer}, {"kind", to_string(l.kind)}, {"observations", l.observations},
                      {"activations", acts}});
  }
  return {{"epoch", r.epoch}, {"threshold", r.threshold}, {"layers", layers}};
}

DeadCapsuleReport report_from_json(const json& j) {
  DeadCapsuleReport r;
  r.epoch = j.at("epoch").get<int>();
  r.threshold = j.at("threshold").get<double>();
  for (const auto& jl : j.at("layers")) {
    LayerReport l;
    l.layer = jl.at("layer").get<std::size_t>();
    l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
    l.observations = jl.at("observations").get<std::uint64_t>();
    std::size_t i = 0;
    for (const auto& a : jl.at("activations")) {
      const double v = a.get<double>();
      l.capsules.push_back({i++, v, v <= r.threshold});
    }
    r.layers.push_back(std::move(l));
  }
  r.recompute_aggregates();
  return r;
}

void register_trace(ActivationLedger& ledger, const std::vector<LayerTrace>& trace) {
  for (const auto& t : trace) ledger.register_layer(t.index, t.kind, t.activations.shape().back());
}

void observe_trace(ActivationLedger& ledger, const std::vector<LayerTrace>& trace) {
  for (const auto& t : trace) ledger.observe_batch(t.index, t.activations);
}

std::vector<std::size_t> take(const std::vector<std::size_t>& v, std::size_t begin, std::size_t end) {
  return {v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<std::size_t> labels_at(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(d.labels[i]);
  return out;
}

// Keeps a stratified subset of at most `cap` samples.
Dataset cap_samples(const Dataset& d, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || d.size() <= cap) return d;
  const double f = static_cast<double>(cap) / static_cast<double>(d.size());
  auto parts = stratified_split_indices(d.labels, d.n_classes, {f, 1.0 - f}, seed);
  return subset(d, parts[0]);
}

}  // namespace

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::diverged: return "diverged";
    case RunStatus::failed: return "failed";
  }
  return "?";
}

RunStatus parse_run_status(const std::string& s) {
  if (s == "completed") return RunStatus::completed;
  if (s == "diverged") return RunStatus::diverged;
  if (s == "failed") return RunStatus::failed;
  raise(ErrorKind::format, "unknown run status '" + s + "'");
}

std::string run_record_to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json je = {{"epoch", e.epoch},
               {"margin", e.margin},
               {"train_loss", number_or_null(e.train_loss)},
               {"val_accuracy", e.val_accuracy},
               {"val_avg_dead_count", e.val_avg_dead_count},
               {"val_avg_dead_fraction", e.val_avg_dead_fraction},
               {"seconds", e.seconds}};
    if (e.train_avg_dead_fraction) je["train_avg_dead_fraction"] = *e.train_avg_dead_fraction;
    epochs.push_back(std::move(je));
  }
  json snaps = json::array();
  for (const auto& s : r.snapshots)
    snaps.push_back({{"epoch", s.epoch}, {"threshold", s.threshold}, {"csv", serialize_snapshot(s)}});
  json j = {{"run_id", r.run_id},
            {"algorithm", r.algorithm},
            {"depth", r.depth},
            {"seed", r.seed},
            {"n_classes", r.n_classes},
            {"parameter_count", r.parameter_count},
            {"status", to_string(r.status)},
            {"message", r.message},
            {"test_accuracy", number_or_null(r.test_accuracy)},
            {"wall_seconds", r.wall_seconds},
            {"config", json::parse(r.config_json.empty() ? "{}" : r.config_json)},
            {"epochs", epochs},
            {"test_report", r.has_test() ? report_to_json(r.test_report) : json(nullptr)},
            {"snapshots", snaps}};
  return j.dump(1);
}

RunRecord run_record_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) raise(ErrorKind::format, "run record is not a JSON object");
  try {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.depth = j.at("depth").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_classes = j.at("n_classes").get<std::size_t>();
    r.parameter_count = j.at("parameter_count").get<std::size_t>();
    r.status = parse_run_status(j.at("status").get<std::string>());
    r.message = j.at("message").get<std::string>();
    r.test_accuracy = number_or_nan(j.at("test_accuracy"));
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.config_json = j.at("config").dump(2);
    for (const auto& je : j.at("epochs")) {
      EpochMetrics e;
      e.epoch = je.at("epoch").get<std::size_t>();
      e.margin = je.at("margin").get<double>();
      e.train_loss = number_or_nan(je.at("train_loss"));
      e.val_accuracy = je.at("val_accuracy").get<double>();
      e.val_avg_dead_count = je.at("val_avg_dead_count").get<double>();
      e.val_avg_dead_fraction = je.at("val_avg_dead_fraction").get<double>();
      e.seconds = je.at("seconds").get<double>();
      if (je.contains("train_avg_dead_fraction")) e.train_avg_dead_fraction = je["train_avg_dead_fraction"].get<double>();
      r.epochs.push_back(e);
    }
    if (!j.at("test_report").is_null()) r.test_report = report_from_json(j["test_report"]);
    for (const auto& js : j.at("snapshots")) {
      SnapshotRecord s;
      s.epoch = js.at("epoch").get<int>();
      s.threshold = js.at("threshold").get<double>();
      s.rows = parse_snapshot_rows(js.at("csv").get<std::string>());
      r.snapshots.push_back(std::move(s));
    }
    return r;
  } catch (const json::exception& e) {
    raise(ErrorKind::format, std::string("malformed run record: ") + e.what());
  }
}

void save_run_record(const RunRecord& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorKind::io, "cannot write " + path.string());
  f << run_record_to_json(r) << '\n';
  if (!f) raise(ErrorKind::io, "write failed: " + path.string());
}

RunRecord load_run_record(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorKind::io, "cannot read " + path.string());
  return run_record_from_json({std::istreambuf_iterator<char>(f), {}});
}

std::string make_run_id(const std::string& algorithm, std::size_t depth, std::uint64_t seed) {
  return algorithm + "_d" + std::to_string(depth) + "_s" + std::to_string(seed);
}

DataSplits prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset pool, test;
  bool has_test = false;
  if (cfg.dataset == "synthetic") {
    SyntheticSpec s;
    s.n_classes = cfg.n_classes;
    s.image_size = cfg.image_size;
    s.samples_per_class = cfg.samples_per_class;
    s.seed = cfg.data_seed;
    s.noise = cfg.noise;
    pool = generate_synthetic(s);
  } else if (cfg.dataset == "idx") {
    pool = load_idx(cfg.idx_train_images, cfg.idx_train_labels);
    if (!cfg.idx_test_images.empty()) {
      test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
      has_test = true;
    }
  } else {
    LoadedTensors t = read_dataset_file(cfg.data_path);
    pool = std::move(t.train);
    if (t.has_test) {
      test = std::move(t.test);
      has_test = true;
    }
  }
  if (has_test) {
    if (test.n_classes != pool.n_classes) {
      const std::size_t n = std::max(test.n_classes, pool.n_classes);
      test.n_classes = pool.n_classes = n;
    }
    if (test.images.size(1) != pool.images.size(1) || test.images.size(2) != pool.images.size(2) ||
        test.images.size(3) != pool.images.size(3))
      raise(ErrorKind::consistency, "train and test images differ in shape");
  }
  pool = cap_samples(pool, cfg.max_train, cfg.data_seed);

  DataSplits raw;
  if (has_test) {
    auto parts = split(pool, {0.9, 0.1}, cfg.data_seed);
    raw = {std::move(parts[0]), std::move(parts[1]), std::move(test)};
  } else {
    auto parts = split(pool, {0.72, 0.08, 0.2}, cfg.data_seed);
    raw = {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
  }
  return normalize_splits(raw);
}

NetworkSpec network_spec_for(const ExperimentConfig& cfg, const DataSplits& data, Algorithm algorithm,
                             std::size_t depth) {
  NetworkSpec s;
  s.in_channels = data.train.channels();
  s.image_size = data.train.image_size();
  s.n_conv_caps_layers = depth;
  s.n_caps = cfg.n_caps;
  s.pose_dim = cfg.pose_dim;
  s.n_classes = data.train.n_classes;
  s.backbone_channels = cfg.backbone_channels;
  s.kernel = cfg.kernel;
  s.stride = cfg.stride;
  s.padding = cfg.padding;
  s.routing.algorithm = algorithm;
  s.routing.iterations = cfg.iterations;
  s.routing.epsilon = cfg.routing_epsilon;
  s.beta_a_init = cfg.beta_a_init;
  s.beta_u_init = cfg.beta_u_init;
  return s;
}

EvalResult evaluate(Network& net, const Dataset& d, std::size_t batch_size, int epoch, double threshold) {
  NoGradScope no_grad;
  ActivationLedger ledger(epoch);
  std::size_t correct = 0;
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t b = 0; b < d.size(); b += batch_size) {
    const auto batch = take(idx, b, std::min(d.size(), b + batch_size));
    ForwardResult fr = net.forward(d.batch_images(batch));
    if (b == 0) register_trace(ledger, fr.trace);
    observe_trace(ledger, fr.trace);
    const auto pred = predict(fr.class_activations);
    for (std::size_t i = 0; i < batch.size(); ++i) correct += pred[i] == d.labels[batch[i]] ? 1 : 0;
  }
  EvalResult r;
  r.accuracy = d.size() ? static_cast<double>(correct) / static_cast<double>(d.size()) : 0.0;
  r.report = ledger.finalize(threshold);
  return r;
}

RunRecord train_run(const ExperimentConfig& cfg, const DataSplits& data, Algorithm algorithm, std::size_t depth,
                    std::uint64_t seed, std::unique_ptr<Network>* trained) {
  const auto t0 = Clock::now();
  const NetworkSpec spec = network_spec_for(cfg, data, algorithm, depth);
  if (!spec.validate() && cfg.verbose)
    std::cerr << "warning: depth " << depth << " exceeds the usual maximum of 10\n";

  RunRecord rec;
  rec.algorithm = to_string(algorithm);
  rec.run_id = make_run_id(rec.algorithm, depth, seed);
  rec.depth = depth;
  rec.seed = seed;
  rec.n_classes = spec.n_classes;
  {
    ExperimentConfig echo = cfg;
    echo.algorithm = rec.algorithm;
    echo.depth = depth;
    echo.seed = seed;
    rec.config_json = echo.to_json();
  }

  auto net = std::make_unique<Network>(spec, seed);
  rec.parameter_count = net->parameter_count();
  const Dataset& train = data.train;
  if (train.size() == 0) raise(ErrorKind::configuration, "training split is empty");

  if (cfg.calibrate) {
    std::vector<std::size_t> first(std::min(cfg.batch_size, train.size()));
    std::iota(first.begin(), first.end(), std::size_t{0});
    net->calibrate(train.batch_images(first));
  }

  std::vector<Tensor> params;
  for (auto& p : net->parameters()) params.push_back(p.tensor);
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam opt(params, ac);
  std::mt19937_64 rng(seed ^ 0x5eedba7c4ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs && rec.status == RunStatus::completed; ++epoch) {
    const auto te = Clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.margin = annealed_margin(cfg.margin_start, cfg.margin_end, epoch, cfg.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    ActivationLedger train_ledger(static_cast<int>(epoch));
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto batch = take(order, b, std::min(order.size(), b + cfg.batch_size));
      try {
        Tape tape;
        TapeScope scope(tape);
        ForwardResult fr = net->forward(train.batch_images(batch));
        Tensor loss = spread_loss(fr.class_activations, labels_at(train, batch), m.margin);
        if (!std::isfinite(loss.item())) raise(ErrorKind::domain, "non-finite loss");
        backward(loss, tape);
        if (cfg.train_telemetry) {
          if (n_batches == 0) register_trace(train_ledger, fr.trace);
          observe_trace(train_ledger, fr.trace);
        }
        loss_sum += loss.item();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::domain) throw;
        rec.status = RunStatus::diverged;
        rec.message = "diverged in epoch " + std::to_string(epoch) + ", batch " + std::to_string(n_batches + 1) +
                      ": " + e.what();
        break;
      }
      opt.step();
      opt.zero_grad();
      ++n_batches;
    }
    if (rec.status != RunStatus::completed) break;
    m.train_loss = loss_sum / static_cast<double>(n_batches);
    if (cfg.train_telemetry) m.train_avg_dead_fraction = train_ledger.finalize(cfg.threshold).avg_dead_fraction;

    EvalResult val = evaluate(*net, data.val, cfg.eval_batch_size, static_cast<int>(epoch), cfg.threshold);
    m.val_accuracy = val.accuracy;
    m.val_avg_dead_count = val.report.avg_dead_count;
    m.val_avg_dead_fraction = val.report.avg_dead_fraction;
    m.seconds = seconds_since(te);
    rec.snapshots.push_back(export_snapshot(val.report, static_cast<int>(epoch)));
    rec.epochs.push_back(m);
    if (cfg.verbose)
      std::cerr << rec.run_id << " epoch " << epoch << "/" << cfg.epochs << " loss " << m.train_loss << " val_acc "
                << m.val_accuracy << " dead_frac " << m.val_avg_dead_fraction << " (" << m.seconds << " s)\n";
  }

  try {
    EvalResult test = evaluate(*net, data.test, cfg.eval_batch_size, static_cast<int>(rec.epochs.size()),
                               cfg.threshold);
    rec.test_accuracy = test.accuracy;
    rec.test_report = test.report;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::domain) throw;
    rec.test_accuracy = std::nan("");
    rec.message += (rec.message.empty() ? "" : "; ") + std::string("test evaluation failed: ") + e.what();
    if (rec.status == RunStatus::completed) rec.status = RunStatus::diverged;
  }
  rec.wall_seconds = seconds_since(t0);
  if (cfg.verbose)
    std::cerr << rec.run_id << " " << to_string(rec.status) << " test_acc " << rec.test_accuracy << " ("
              << rec.wall_seconds << " s)\n";
  if (trained) *trained = std::move(net);
  return rec;
}

void ensure_writable_dir(const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec || !std::filesystem::is_directory(outdir))
    raise(ErrorKind::io, "cannot create output directory " + outdir.string());
  const auto probe = outdir / ".write_probe";
  {
    std::ofstream f(probe, std::ios::trunc);
    if (!f || !(f << "ok")) raise(ErrorKind::io, "output directory is not writable: " + outdir.string());
  }
  std::filesystem::remove(probe, ec);
}

RunRecord train(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path out = cfg.outdir;
  ensure_writable_dir(out);
  const DataSplits data = prepare_data(cfg);
  std::unique_ptr<Network> net;
  RunRecord rec = train_run(cfg, data, cfg.train_algorithm(), cfg.depth, cfg.seed, &net);
  const auto dir = out / "runs" / rec.run_id;
  std::filesystem::create_directories(dir);
  save_run_record(rec, dir / "run.json");
  save_checkpoint(*net, dir / "model.ckpt");
  emit_reports({rec}, out);
  return rec;
}

}  // namespace capsnet
