#include "harness/config.hpp"

#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "core/errors.hpp"

namespace capsnet {

namespace {

using json = nlohmann::ordered_json;

struct Field {
  std::string name;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> put;
  bool is_list = false;
  bool is_string = false;
};

[[noreturn]] void bad_value(const std::string& key, const json& v, const char* want) {
  raise(ErrorKind::configuration, "config key '" + key + "' expects " + want + ", got " + v.dump());
}

std::size_t as_size(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0) bad_value(key, v, "a non-negative integer");
  return v.get<std::size_t>();
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad_value(key, v, "a number");
  return v.get<double>();
}

template <class M>
Field size_field(std::string name, M ExperimentConfig::*m) {
  return {name, [m](const ExperimentConfig& c) { return json(c.*m); },
          [name, m](ExperimentConfig& c, const json& v) { c.*m = static_cast<M>(as_size(name, v)); }};
}

Field double_field(std::string name, double ExperimentConfig::*m) {
  return {name, [m](const ExperimentConfig& c) { return json(c.*m); },
          [name, m](ExperimentConfig& c, const json& v) { c.*m = as_double(name, v); }};
}

Field string_field(std::string name, std::string ExperimentConfig::*m) {
  return {name, [m](const ExperimentConfig& c) { return json(c.*m); },
          [name, m](ExperimentConfig& c, const json& v) {
            if (!v.is_string()) bad_value(name, v, "a string");
            c.*m = v.get<std::string>();
          },
          false, true};
}

Field bool_field(std::string name, bool ExperimentConfig::*m) {
  return {name, [m](const ExperimentConfig& c) { return json(c.*m); },
          [name, m](ExperimentConfig& c, const json& v) {
            if (!v.is_boolean()) bad_value(name, v, "true or false");
            c.*m = v.get<bool>();
          }};
}

template <class T>
Field list_field(std::string name, std::vector<T> ExperimentConfig::*m) {
  return {name, [m](const ExperimentConfig& c) { return json(c.*m); },
          [name, m](ExperimentConfig& c, const json& v) {
            if (!v.is_array()) bad_value(name, v, "a list");
            std::vector<T> out;
            for (const auto& e : v) {
              if constexpr (std::is_same_v<T, std::string>) {
                if (!e.is_string()) bad_value(name, e, "a list of strings");
                out.push_back(e.get<std::string>());
              } else {
                out.push_back(static_cast<T>(as_size(name, e)));
              }
            }
            c.*m = std::move(out);
          },
          true, std::is_same_v<T, std::string>};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(string_field("dataset", &ExperimentConfig::dataset));
    v.push_back(string_field("data_path", &ExperimentConfig::data_path));
    v.push_back(string_field("idx_train_images", &ExperimentConfig::idx_train_images));
    v.push_back(string_field("idx_train_labels", &ExperimentConfig::idx_train_labels));
    v.push_back(string_field("idx_test_images", &ExperimentConfig::idx_test_images));
    v.push_back(string_field("idx_test_labels", &ExperimentConfig::idx_test_labels));
    v.push_back(size_field("n_classes", &ExperimentConfig::n_classes));
    v.push_back(size_field("image_size", &ExperimentConfig::image_size));
    v.push_back(size_field("samples_per_class", &ExperimentConfig::samples_per_class));
    v.push_back(size_field("data_seed", &ExperimentConfig::data_seed));
    v.push_back(double_field("noise", &ExperimentConfig::noise));
    v.push_back(size_field("max_train", &ExperimentConfig::max_train));
    v.push_back(string_field("algorithm", &ExperimentConfig::algorithm));
    v.push_back(list_field("algorithms", &ExperimentConfig::algorithms));
    v.push_back(size_field("depth", &ExperimentConfig::depth));
    v.push_back(list_field("depths", &ExperimentConfig::depths));
    v.push_back(size_field("n_caps", &ExperimentConfig::n_caps));
    v.push_back(size_field("pose_dim", &ExperimentConfig::pose_dim));
    v.push_back(size_field("kernel", &ExperimentConfig::kernel));
    v.push_back(size_field("stride", &ExperimentConfig::stride));
    v.push_back(size_field("padding", &ExperimentConfig::padding));
    v.push_back(size_field("backbone_channels", &ExperimentConfig::backbone_channels));
    v.push_back(size_field("iterations", &ExperimentConfig::iterations));
    v.push_back(double_field("routing_epsilon", &ExperimentConfig::routing_epsilon));
    v.push_back(double_field("beta_a_init", &ExperimentConfig::beta_a_init));
    v.push_back(double_field("beta_u_init", &ExperimentConfig::beta_u_init));
    v.push_back(bool_field("calibrate", &ExperimentConfig::calibrate));
    v.push_back(size_field("epochs", &ExperimentConfig::epochs));
    v.push_back(size_field("batch_size", &ExperimentConfig::batch_size));
    v.push_back(size_field("eval_batch_size", &ExperimentConfig::eval_batch_size));
    v.push_back(double_field("lr", &ExperimentConfig::lr));
    v.push_back(double_field("margin_start", &ExperimentConfig::margin_start));
    v.push_back(double_field("margin_end", &ExperimentConfig::margin_end));
    v.push_back(size_field("seed", &ExperimentConfig::seed));
    v.push_back(list_field("seeds", &ExperimentConfig::seeds));
    v.push_back(double_field("threshold", &ExperimentConfig::threshold));
    v.push_back(bool_field("train_telemetry", &ExperimentConfig::train_telemetry));
    v.push_back(string_field("outdir", &ExperimentConfig::outdir));
    v.push_back(size_field("jobs", &ExperimentConfig::jobs));
    v.push_back(bool_field("verbose", &ExperimentConfig::verbose));
    return v;
  }();
  return f;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  raise(ErrorKind::configuration, "unknown config key '" + key + "'");
}

// Converts a flag value into JSON of the field's type. Lists are
// comma-separated; scalars go through the JSON parser so "3", "1e-3" and
// "true" all work.
json scalar_from_text(const std::string& key, const std::string& text, bool is_string) {
  if (is_string) return json(text);
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) raise(ErrorKind::configuration, "config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { raise(ErrorKind::configuration, m); };
  if (dataset != "synthetic" && dataset != "idx" && dataset != "tensors")
    fail("dataset must be synthetic, idx or tensors, got '" + dataset + "'");
  if (dataset == "tensors" && data_path.empty()) fail("dataset 'tensors' needs data_path");
  if (dataset == "idx" && (idx_train_images.empty() || idx_train_labels.empty()))
    fail("dataset 'idx' needs idx_train_images and idx_train_labels");
  if (dataset == "idx" && idx_test_images.empty() != idx_test_labels.empty())
    fail("idx_test_images and idx_test_labels must be given together");
  parse_algorithm(algorithm);
  if (algorithms.empty()) fail("algorithms must not be empty");
  for (const auto& a : algorithms) parse_algorithm(a);
  if (depth < 1) fail("depth must be >= 1");
  if (depths.empty()) fail("depths must not be empty");
  for (auto d : depths)
    if (d < 1) fail("every depth must be >= 1");
  if (seeds.empty()) fail("seeds must not be empty");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) fail("batch sizes must be >= 1");
  if (!(lr > 0)) fail("lr must be positive");
  if (!(margin_start > 0 && margin_start < 1 && margin_end > 0 && margin_end < 1))
    fail("margins must lie in (0, 1)");
  if (!(threshold >= 0 && threshold < 1)) fail("threshold must lie in [0, 1)");
  if (n_caps < 1 || pose_dim < 1) fail("n_caps and pose_dim must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (!(routing_epsilon > 0)) fail("routing_epsilon must be positive");
  if (outdir.empty()) fail("outdir must not be empty");
  if (jobs < 1) fail("jobs must be >= 1");
}

std::string ExperimentConfig::to_json() const {
  json j = json::object();
  for (const auto& f : fields()) j[f.name] = f.get(*this);
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) raise(ErrorKind::configuration, "config is not a JSON object");
  ExperimentConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) find_field(it.key()).put(c, it.value());
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorKind::configuration, "cannot read config file " + path.string());
  return from_json({std::istreambuf_iterator<char>(f), {}});
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  if (!f.is_list) {
    f.put(*this, scalar_from_text(key, value, f.is_string));
    return;
  }
  json arr = json::array();
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) arr.push_back(scalar_from_text(key, item, f.is_string));
  f.put(*this, arr);
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return k;
}

}  // namespace capsnet
