// Command-line front end. Talks to the engine only through the C API.
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capsnet/capsnet.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int exit_code(capsnet_status s) {
  if (s == CAPSNET_OK) return kExitOk;
  return s == CAPSNET_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

int report(capsnet_status s, const char* what) {
  if (s != CAPSNET_OK)
    std::fprintf(stderr, "capsnet %s: %s: %s\n", what, capsnet_status_name(s), capsnet_last_error());
  return exit_code(s);
}

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::vector<std::string>> values;  // key -> occurrences
};

// Every config key becomes a --key flag; booleans also accept a bare --key.
void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  capsnet_config* defaults = nullptr;
  capsnet_config_create(&defaults);
  size_t needed = 0;
  capsnet_config_to_json(defaults, nullptr, 0, &needed);
  std::string text(needed, '\0');
  capsnet_config_to_json(defaults, text.data(), text.size(), nullptr);
  capsnet_config_destroy(defaults);
  text.resize(needed - 1);
  const auto dflt = nlohmann::ordered_json::parse(text);

  cmd->add_option("-c,--config", flags.config_path, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  for (size_t i = 0; i < capsnet_config_key_count(); ++i) {
    const std::string key = capsnet_config_key(i);
    const auto& d = dflt.at(key);
    std::string shown = d.is_string() ? d.get<std::string>() : d.dump();
    if (d.is_array()) {
      shown.clear();
      for (const auto& e : d) shown += (shown.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
    }
    auto* opt = cmd->add_option("--" + key, flags.values[key], "default: " + shown);
    if (d.is_boolean()) opt->expected(0, 1)->default_str("");
    else opt->type_name(d.is_array() ? "LIST" : d.is_string() ? "TEXT" : "VALUE");
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

capsnet_status build_config(const ConfigFlags& flags, CLI::App* cmd, capsnet_config** out) {
  capsnet_status s = flags.config_path.empty() ? capsnet_config_create(out)
                                               : capsnet_config_load(flags.config_path.c_str(), out);
  if (s != CAPSNET_OK) return s;
  for (const auto& [key, vals] : flags.values) {
    if (cmd->count("--" + key) == 0) continue;
    const std::string v = vals.empty() || vals.back().empty() ? "true" : vals.back();
    if ((s = capsnet_config_set(*out, key.c_str(), v.c_str())) != CAPSNET_OK) return s;
  }
  return capsnet_config_validate(*out);
}

void print_runs(const capsnet_runs* runs) {
  std::printf("%-18s %-5s %-9s %-9s %-10s %-10s %s\n", "run", "depth", "status", "test_acc", "dead_count",
              "dead_frac", "seconds");
  for (size_t i = 0; i < capsnet_runs_count(runs); ++i) {
    capsnet_run_summary r;
    capsnet_runs_get(runs, i, &r);
    const char* status = r.status == CAPSNET_RUN_COMPLETED ? "ok" : r.status == CAPSNET_RUN_DIVERGED ? "diverged"
                                                                                                       : "failed";
    std::printf("%-18s %-5zu %-9s %-9.4f %-10.3f %-10.4f %.1f\n", r.run_id, r.depth, status, r.test_accuracy,
                r.avg_dead_count, r.avg_dead_fraction, r.wall_seconds);
  }
}

int run_experiment(const ConfigFlags& flags, CLI::App* cmd, bool is_sweep) {
  capsnet_config* cfg = nullptr;
  capsnet_status s = build_config(flags, cmd, &cfg);
  if (s != CAPSNET_OK) {
    capsnet_config_destroy(cfg);
    return report(s, "config");
  }
  capsnet_runs* runs = nullptr;
  s = is_sweep ? capsnet_sweep(cfg, &runs) : capsnet_train(cfg, &runs);
  capsnet_config_destroy(cfg);
  if (s != CAPSNET_OK) return report(s, is_sweep ? "sweep" : "train");
  print_runs(runs);
  capsnet_runs_destroy(runs);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule-network routing engine with dead-capsule telemetry"};
  app.require_subcommand(1);

  ConfigFlags train_flags, sweep_flags;
  auto* train = app.add_subcommand("train", "Train one network and write its record and reports");
  add_config_flags(train, train_flags);
  auto* sweep = app.add_subcommand("sweep", "Train every (algorithm, depth, seed) combination");
  add_config_flags(sweep, sweep_flags);

  auto* analyze = app.add_subcommand("analyze", "Re-emit reports from run records under an output directory");
  std::string analyze_dir = "capsnet_out";
  analyze->add_option("-o,--outdir", analyze_dir, "directory holding runs/*/run.json")->capture_default_str();

  auto* selftest = app.add_subcommand("selftest", "Run the quick oracle and invariant suite");
  bool quiet = false;
  selftest->add_flag("-q,--quiet", quiet, "print failures only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*train) return run_experiment(train_flags, train, false);
  if (*sweep) return run_experiment(sweep_flags, sweep, true);
  if (*analyze) {
    capsnet_runs* runs = nullptr;
    const capsnet_status s = capsnet_analyze(analyze_dir.c_str(), &runs);
    if (s != CAPSNET_OK) return report(s, "analyze");
    print_runs(runs);
    capsnet_runs_destroy(runs);
    return kExitOk;
  }
  size_t failed = 0;
  auto cb = [](const char* name, int passed, const char* detail, void* user) {
    if (passed && *static_cast<bool*>(user)) return;
    std::printf("%s %s (%s)\n", passed ? "PASS" : "FAIL", name, detail);
  };
  const capsnet_status s = capsnet_selftest(cb, &quiet, &failed);
  if (s != CAPSNET_OK) return report(s, "selftest");
  std::printf("%zu check(s) failed\n", failed);
  return failed == 0 ? kExitOk : kExitRuntime;
}
