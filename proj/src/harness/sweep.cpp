#include "harness/sweep.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <thread>

#include "core/errors.hpp"
#include "harness/reports.hpp"

namespace capsnet {

namespace {

struct Job {
  std::string algorithm;
  std::size_t depth;
  std::uint64_t seed;
};

RunRecord failed_record(const ExperimentConfig& cfg, const Job& job, const std::string& what) {
  RunRecord r;
  r.algorithm = job.algorithm;
  r.run_id = make_run_id(job.algorithm, job.depth, job.seed);
  r.depth = job.depth;
  r.seed = job.seed;
  r.n_classes = 0;
  r.status = RunStatus::failed;
  r.message = what;
  r.test_accuracy = std::nan("");
  ExperimentConfig echo = cfg;
  echo.algorithm = job.algorithm;
  echo.depth = job.depth;
  echo.seed = job.seed;
  r.config_json = echo.to_json();
  return r;
}

}  // namespace

std::vector<RunRecord> sweep_runs(const ExperimentConfig& cfg, const DataSplits& data) {
  cfg.validate();
  std::vector<Job> jobs;
  for (const auto& a : cfg.algorithms)
    for (auto d : cfg.depths)
      for (auto s : cfg.seeds) jobs.push_back({to_string(parse_algorithm(a)), d, s});

  std::vector<RunRecord> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      try {
        out[i] = train_run(cfg, data, parse_algorithm(j.algorithm), j.depth, j.seed);
      } catch (const std::exception& e) {
        out[i] = failed_record(cfg, j, e.what());
        if (cfg.verbose) std::cerr << out[i].run_id << " failed: " << e.what() << '\n';
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.jobs, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<RunRecord> sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path outdir = cfg.outdir;
  ensure_writable_dir(outdir);
  const DataSplits data = prepare_data(cfg);
  std::vector<RunRecord> records = sweep_runs(cfg, data);
  for (const auto& r : records) {
    const auto dir = outdir / "runs" / r.run_id;
    std::filesystem::create_directories(dir);
    save_run_record(r, dir / "run.json");
  }
  emit_reports(records, outdir);
  return records;
}

}  // namespace capsnet
