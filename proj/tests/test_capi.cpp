#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "capsnet/capsnet.h"

namespace fs = std::filesystem;

namespace {

struct Config {
  capsnet_config* h = nullptr;
  Config() { EXPECT_EQ(capsnet_config_create(&h), CAPSNET_OK); }
  ~Config() { capsnet_config_destroy(h); }
  void set(const char* k, const char* v) { ASSERT_EQ(capsnet_config_set(h, k, v), CAPSNET_OK) << capsnet_last_error(); }
};

void make_small(Config& c, const std::string& outdir) {
  c.set("n_classes", "3");
  c.set("samples_per_class", "10");
  c.set("n_caps", "2");
  c.set("pose_dim", "2");
  c.set("backbone_channels", "4");
  c.set("epochs", "2");
  c.set("batch_size", "8");
  c.set("algorithm", "self");
  c.set("outdir", outdir.c_str());
}

std::string temp_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("capsnet_capi_") + name);
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(capsnet_status_name(CAPSNET_OK), "ok");
  EXPECT_STREQ(capsnet_status_name(CAPSNET_ERR_CONFIG), "configuration error");
  EXPECT_STREQ(capsnet_status_name(static_cast<capsnet_status>(99)), "unknown status");
  EXPECT_GT(std::string(capsnet_version()).size(), 0u);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(capsnet_config_create(nullptr), CAPSNET_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(capsnet_config_set(nullptr, "lr", "1"), CAPSNET_ERR_INVALID_ARGUMENT);
  EXPECT_STRNE(capsnet_last_error(), "");
  EXPECT_EQ(capsnet_train(nullptr, nullptr), CAPSNET_ERR_INVALID_ARGUMENT);
  size_t failed = 0;
  EXPECT_EQ(capsnet_selftest(nullptr, nullptr, nullptr), CAPSNET_ERR_INVALID_ARGUMENT);
  (void)failed;
  capsnet_run_summary s;
  EXPECT_EQ(capsnet_runs_get(nullptr, 0, &s), CAPSNET_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(capsnet_runs_count(nullptr), 0u);
  capsnet_config_destroy(nullptr);
  capsnet_runs_destroy(nullptr);
  capsnet_network_destroy(nullptr);
}

TEST(CApi, ConfigKeysAndJsonBuffer) {
  Config c;
  ASSERT_GT(capsnet_config_key_count(), 20u);
  EXPECT_EQ(capsnet_config_key(capsnet_config_key_count()), nullptr);
  size_t needed = 0;
  ASSERT_EQ(capsnet_config_to_json(c.h, nullptr, 0, &needed), CAPSNET_OK);
  std::vector<char> buf(needed);
  ASSERT_EQ(capsnet_config_to_json(c.h, buf.data(), buf.size(), nullptr), CAPSNET_OK);
  const std::string json(buf.data());
  EXPECT_EQ(json.size() + 1, needed);
  for (size_t i = 0; i < capsnet_config_key_count(); ++i)
    EXPECT_NE(json.find(std::string("\"") + capsnet_config_key(i) + "\""), std::string::npos);
  char small[8];
  ASSERT_EQ(capsnet_config_to_json(c.h, small, sizeof small, nullptr), CAPSNET_OK);
  EXPECT_EQ(std::string(small), json.substr(0, 7));
}

TEST(CApi, ConfigErrorsCarryMessages) {
  Config c;
  EXPECT_EQ(capsnet_config_set(c.h, "bogus", "1"), CAPSNET_ERR_CONFIG);
  EXPECT_NE(std::string(capsnet_last_error()).find("bogus"), std::string::npos);
  c.set("epochs", "0");
  EXPECT_EQ(capsnet_config_validate(c.h), CAPSNET_ERR_CONFIG);
  capsnet_config* loaded = nullptr;
  EXPECT_EQ(capsnet_config_load("/nonexistent/x.json", &loaded), CAPSNET_ERR_CONFIG);
  EXPECT_EQ(loaded, nullptr);
  c.set("epochs", "1");
  EXPECT_EQ(capsnet_config_validate(c.h), CAPSNET_OK);
  EXPECT_STREQ(capsnet_last_error(), "");
}

TEST(CApi, ConfigFileLoads) {
  const fs::path p = fs::path(temp_dir("cfg")) += ".json";
  FILE* f = std::fopen(p.c_str(), "w");
  ASSERT_NE(f, nullptr);
  std::fputs("{\"epochs\": 4, \"depths\": [1, 2]}", f);
  std::fclose(f);
  capsnet_config* c = nullptr;
  ASSERT_EQ(capsnet_config_load(p.c_str(), &c), CAPSNET_OK) << capsnet_last_error();
  size_t needed = 0;
  capsnet_config_to_json(c, nullptr, 0, &needed);
  std::vector<char> buf(needed);
  capsnet_config_to_json(c, buf.data(), buf.size(), nullptr);
  EXPECT_NE(std::string(buf.data()).find("\"epochs\": 4"), std::string::npos);
  capsnet_config_destroy(c);
}

TEST(CApi, TrainAnalyzeAndInspectRuns) {
  Config c;
  const std::string out = temp_dir("train");
  make_small(c, out);
  capsnet_runs* runs = nullptr;
  ASSERT_EQ(capsnet_train(c.h, &runs), CAPSNET_OK) << capsnet_last_error();
  ASSERT_EQ(capsnet_runs_count(runs), 1u) << capsnet_last_error();
  capsnet_run_summary s;
  ASSERT_EQ(capsnet_runs_get(runs, 0, &s), CAPSNET_OK);
  EXPECT_STREQ(s.run_id, "self_d1_s1");
  EXPECT_EQ(s.status, CAPSNET_RUN_COMPLETED);
  EXPECT_EQ(s.epochs, 2u);
  EXPECT_GE(s.test_accuracy, 0.0);
  EXPECT_LE(s.test_accuracy, 1.0);
  EXPECT_GE(s.avg_dead_fraction, 0.0);
  EXPECT_EQ(capsnet_runs_get(runs, 1, &s), CAPSNET_ERR_INVALID_ARGUMENT);

  size_t n = 0;
  ASSERT_EQ(capsnet_runs_epoch_losses(runs, 0, nullptr, 0, &n), CAPSNET_OK);
  ASSERT_EQ(n, 2u);
  double losses[2];
  ASSERT_EQ(capsnet_runs_epoch_losses(runs, 0, losses, 2, &n), CAPSNET_OK);
  EXPECT_TRUE(std::isfinite(losses[0]) && std::isfinite(losses[1]));

  capsnet_runs* again = nullptr;
  ASSERT_EQ(capsnet_analyze(out.c_str(), &again), CAPSNET_OK) << capsnet_last_error();
  ASSERT_EQ(capsnet_runs_count(again), 1u);
  capsnet_run_summary t;
  capsnet_runs_get(again, 0, &t);
  EXPECT_EQ(t.test_accuracy, s.test_accuracy);
  capsnet_runs_destroy(again);
  capsnet_runs_destroy(runs);

  EXPECT_TRUE(fs::exists(fs::path(out) / "summary.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "runs" / "self_d1_s1" / "model.ckpt"));

  // the saved checkpoint predicts
  capsnet_network* net = nullptr;
  ASSERT_EQ(capsnet_network_load((fs::path(out) / "runs" / "self_d1_s1" / "model.ckpt").c_str(), &net), CAPSNET_OK)
      << capsnet_last_error();
  size_t n_classes = 0;
  capsnet_network_n_classes(net, &n_classes);
  EXPECT_EQ(n_classes, 3u);
  capsnet_network_destroy(net);
}

TEST(CApi, AnalyzeMissingDirectoryIsIoError) {
  capsnet_runs* runs = nullptr;
  EXPECT_EQ(capsnet_analyze(temp_dir("missing").c_str(), &runs), CAPSNET_ERR_IO);
}

TEST(CApi, NetworkSaveLoadPredict) {
  Config c;
  make_small(c, temp_dir("net"));
  capsnet_network* net = nullptr;
  ASSERT_EQ(capsnet_network_create(c.h, 1, 12, 3, &net), CAPSNET_OK) << capsnet_last_error();
  size_t params = 0;
  capsnet_network_parameter_count(net, &params);
  EXPECT_GT(params, 0u);

  std::vector<double> images(4 * 144);
  for (size_t i = 0; i < images.size(); ++i) images[i] = std::sin(0.37 * static_cast<double>(i));
  size_t labels[4];
  double acts[4 * 3];
  ASSERT_EQ(capsnet_network_predict(net, images.data(), 4, labels, acts), CAPSNET_OK) << capsnet_last_error();
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_LT(labels[i], 3u);
    for (size_t j = 0; j < 3; ++j) EXPECT_LE(acts[i * 3 + j], acts[i * 3 + labels[i]]);
  }

  const std::string path = temp_dir("net.ckpt");
  ASSERT_EQ(capsnet_network_save(net, path.c_str()), CAPSNET_OK);
  capsnet_network* back = nullptr;
  ASSERT_EQ(capsnet_network_load(path.c_str(), &back), CAPSNET_OK);
  size_t labels2[4];
  double acts2[4 * 3];
  ASSERT_EQ(capsnet_network_predict(back, images.data(), 4, labels2, acts2), CAPSNET_OK);
  for (size_t i = 0; i < 12; ++i) EXPECT_EQ(acts[i], acts2[i]);
  capsnet_network_destroy(back);
  capsnet_network_destroy(net);

  EXPECT_EQ(capsnet_network_load("/nonexistent.ckpt", &back), CAPSNET_ERR_IO);
  EXPECT_EQ(capsnet_network_predict(nullptr, images.data(), 4, labels, nullptr), CAPSNET_ERR_INVALID_ARGUMENT);
}

TEST(CApi, SelftestReportsEveryCheck) {
  struct Seen {
    size_t total = 0, passed = 0;
  } seen;
  size_t failed = 99;
  auto cb = [](const char* name, int passed, const char*, void* user) {
    auto* s = static_cast<Seen*>(user);
    ++s->total;
    s->passed += passed != 0;
    EXPECT_GT(std::string(name).size(), 0u);
  };
  ASSERT_EQ(capsnet_selftest(cb, &seen, &failed), CAPSNET_OK);
  EXPECT_EQ(failed, 0u);
  EXPECT_GT(seen.total, 5u);
  EXPECT_EQ(seen.passed, seen.total);
}
