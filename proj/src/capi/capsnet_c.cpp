#include "capsnet/capsnet.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "harness/config.hpp"
#include "harness/reports.hpp"
#include "harness/selftest.hpp"
#include "harness/sweep.hpp"
#include "harness/trainer.hpp"
#include "layers/checkpoint.hpp"
#include "layers/network.hpp"

struct capsnet_config {
  capsnet::ExperimentConfig cfg;
};

struct capsnet_runs {
  std::vector<capsnet::RunRecord> records;
};

struct capsnet_network {
  std::unique_ptr<capsnet::Network> net;
};

namespace {

thread_local std::string last_error;

capsnet_status status_for(capsnet::ErrorKind kind) {
  using capsnet::ErrorKind;
  switch (kind) {
    case ErrorKind::configuration: return CAPSNET_ERR_CONFIG;
    case ErrorKind::dimension: return CAPSNET_ERR_DIMENSION;
    case ErrorKind::domain: return CAPSNET_ERR_DOMAIN;
    case ErrorKind::contract: return CAPSNET_ERR_CONTRACT;
    case ErrorKind::format: return CAPSNET_ERR_FORMAT;
    case ErrorKind::length: return CAPSNET_ERR_LENGTH;
    case ErrorKind::consistency: return CAPSNET_ERR_CONSISTENCY;
    case ErrorKind::io: return CAPSNET_ERR_IO;
  }
  return CAPSNET_ERR_INTERNAL;
}

capsnet_status fail(capsnet_status s, std::string message) {
  last_error = std::move(message);
  return s;
}

template <class F>
capsnet_status guard(F&& f) {
  try {
    last_error.clear();
    f();
    return CAPSNET_OK;
  } catch (const capsnet::Error& e) {
    return fail(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CAPSNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CAPSNET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CAPSNET_ERR_INTERNAL, "unknown exception");
  }
}

#define CAPSNET_REQUIRE(cond, what) \
  if (!(cond)) return fail(CAPSNET_ERR_INVALID_ARGUMENT, what)

capsnet_status finish_runs(std::vector<capsnet::RunRecord> records, capsnet_runs** out) {
  *out = new capsnet_runs{std::move(records)};
  return CAPSNET_OK;
}

}  // namespace

extern "C" {

const char* capsnet_last_error(void) { return last_error.c_str(); }

const char* capsnet_status_name(capsnet_status status) {
  switch (status) {
    case CAPSNET_OK: return "ok";
    case CAPSNET_ERR_CONFIG: return "configuration error";
    case CAPSNET_ERR_DIMENSION: return "dimension error";
    case CAPSNET_ERR_DOMAIN: return "domain error";
    case CAPSNET_ERR_CONTRACT: return "contract error";
    case CAPSNET_ERR_FORMAT: return "format error";
    case CAPSNET_ERR_LENGTH: return "length error";
    case CAPSNET_ERR_CONSISTENCY: return "consistency error";
    case CAPSNET_ERR_IO: return "io error";
    case CAPSNET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CAPSNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* capsnet_version(void) { return "0.1.0"; }

capsnet_status capsnet_config_create(capsnet_config** out) {
  CAPSNET_REQUIRE(out, "out is null");
  return guard([&] { *out = new capsnet_config{}; });
}

capsnet_status capsnet_config_load(const char* path, capsnet_config** out) {
  CAPSNET_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new capsnet_config{capsnet::ExperimentConfig::load(path)}; });
}

capsnet_status capsnet_config_set(capsnet_config* cfg, const char* key, const char* value) {
  CAPSNET_REQUIRE(cfg && key && value, "null argument");
  return guard([&] { cfg->cfg.set(key, value); });
}

capsnet_status capsnet_config_validate(const capsnet_config* cfg) {
  CAPSNET_REQUIRE(cfg, "config is null");
  return guard([&] { cfg->cfg.validate(); });
}

capsnet_status capsnet_config_to_json(const capsnet_config* cfg, char* buf, size_t cap, size_t* needed) {
  CAPSNET_REQUIRE(cfg, "config is null");
  CAPSNET_REQUIRE(buf || cap == 0, "buffer is null");
  return guard([&] {
    const std::string s = cfg->cfg.to_json();
    if (needed) *needed = s.size() + 1;
    if (cap > 0) {
      const size_t n = std::min(cap - 1, s.size());
      std::memcpy(buf, s.data(), n);
      buf[n] = '\0';
    }
  });
}

size_t capsnet_config_key_count(void) { return capsnet::ExperimentConfig::keys().size(); }

const char* capsnet_config_key(size_t i) {
  const auto& k = capsnet::ExperimentConfig::keys();
  return i < k.size() ? k[i].c_str() : nullptr;
}

void capsnet_config_destroy(capsnet_config* cfg) { delete cfg; }

capsnet_status capsnet_train(const capsnet_config* cfg, capsnet_runs** out) {
  CAPSNET_REQUIRE(cfg && out, "null argument");
  std::vector<capsnet::RunRecord> records;
  auto s = guard([&] { records.push_back(capsnet::train(cfg->cfg)); });
  return s == CAPSNET_OK ? finish_runs(std::move(records), out) : s;
}

capsnet_status capsnet_sweep(const capsnet_config* cfg, capsnet_runs** out) {
  CAPSNET_REQUIRE(cfg && out, "null argument");
  std::vector<capsnet::RunRecord> records;
  auto s = guard([&] { records = capsnet::sweep(cfg->cfg); });
  return s == CAPSNET_OK ? finish_runs(std::move(records), out) : s;
}

capsnet_status capsnet_analyze(const char* outdir, capsnet_runs** out) {
  CAPSNET_REQUIRE(outdir && out, "null argument");
  std::vector<capsnet::RunRecord> records;
  auto s = guard([&] { records = capsnet::analyze(outdir); });
  return s == CAPSNET_OK ? finish_runs(std::move(records), out) : s;
}

size_t capsnet_runs_count(const capsnet_runs* runs) { return runs ? runs->records.size() : 0; }

capsnet_status capsnet_runs_get(const capsnet_runs* runs, size_t i, capsnet_run_summary* out) {
  CAPSNET_REQUIRE(runs && out, "null argument");
  CAPSNET_REQUIRE(i < runs->records.size(), "run index out of range");
  const auto& r = runs->records[i];
  out->run_id = r.run_id.c_str();
  out->algorithm = r.algorithm.c_str();
  out->depth = r.depth;
  out->seed = r.seed;
  out->status = static_cast<capsnet_run_status>(r.status);
  out->test_accuracy = r.test_accuracy;
  out->avg_dead_count = r.has_test() ? r.test_report.avg_dead_count : std::nan("");
  out->avg_dead_fraction = r.has_test() ? r.test_report.avg_dead_fraction : std::nan("");
  out->epochs = r.epochs.size();
  out->parameter_count = r.parameter_count;
  out->wall_seconds = r.wall_seconds;
  return CAPSNET_OK;
}

capsnet_status capsnet_runs_epoch_losses(const capsnet_runs* runs, size_t i, double* out, size_t cap, size_t* n) {
  CAPSNET_REQUIRE(runs && n, "null argument");
  CAPSNET_REQUIRE(out || cap == 0, "buffer is null");
  CAPSNET_REQUIRE(i < runs->records.size(), "run index out of range");
  const auto& e = runs->records[i].epochs;
  *n = e.size();
  for (size_t k = 0; k < std::min(cap, e.size()); ++k) out[k] = e[k].train_loss;
  return CAPSNET_OK;
}

void capsnet_runs_destroy(capsnet_runs* runs) { delete runs; }

capsnet_status capsnet_selftest(capsnet_check_callback cb, void* user, size_t* failed) {
  CAPSNET_REQUIRE(failed, "failed is null");
  return guard([&] {
    *failed = 0;
    for (const auto& c : capsnet::run_selftest()) {
      if (!c.passed) ++*failed;
      if (cb) cb(c.name.c_str(), c.passed ? 1 : 0, c.detail.c_str(), user);
    }
  });
}

capsnet_status capsnet_network_create(const capsnet_config* cfg, size_t in_channels, size_t image_size,
                                      size_t n_classes, capsnet_network** out) {
  CAPSNET_REQUIRE(cfg && out, "null argument");
  return guard([&] {
    cfg->cfg.validate();
    capsnet::DataSplits shape;
    shape.train.images = capsnet::Tensor({1, in_channels, image_size, image_size});
    shape.train.n_classes = n_classes;
    auto spec = capsnet::network_spec_for(cfg->cfg, shape, cfg->cfg.train_algorithm(), cfg->cfg.depth);
    *out = new capsnet_network{std::make_unique<capsnet::Network>(spec, cfg->cfg.seed)};
  });
}

capsnet_status capsnet_network_load(const char* path, capsnet_network** out) {
  CAPSNET_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new capsnet_network{capsnet::load_checkpoint(path)}; });
}

capsnet_status capsnet_network_save(const capsnet_network* net, const char* path) {
  CAPSNET_REQUIRE(net && path, "null argument");
  return guard([&] { capsnet::save_checkpoint(*net->net, path); });
}

capsnet_status capsnet_network_parameter_count(const capsnet_network* net, size_t* out) {
  CAPSNET_REQUIRE(net && out, "null argument");
  *out = net->net->parameter_count();
  return CAPSNET_OK;
}

capsnet_status capsnet_network_n_classes(const capsnet_network* net, size_t* out) {
  CAPSNET_REQUIRE(net && out, "null argument");
  *out = net->net->spec().n_classes;
  return CAPSNET_OK;
}

capsnet_status capsnet_network_predict(capsnet_network* net, const double* images, size_t n, size_t* labels,
                                       double* activations) {
  CAPSNET_REQUIRE(net && images && labels, "null argument");
  CAPSNET_REQUIRE(n > 0, "no images");
  return guard([&] {
    const auto& spec = net->net->spec();
    const size_t per = spec.in_channels * spec.image_size * spec.image_size;
    capsnet::Tensor x({n, spec.in_channels, spec.image_size, spec.image_size},
                      std::vector<double>(images, images + n * per));
    capsnet::NoGradScope no_grad;
    auto fr = net->net->forward(x);
    const auto pred = capsnet::predict(fr.class_activations);
    std::copy(pred.begin(), pred.end(), labels);
    if (activations) {
      auto v = fr.class_activations.values();
      std::copy(v.begin(), v.end(), activations);
    }
  });
}

void capsnet_network_destroy(capsnet_network* net) { delete net; }

}  // extern "C"
