#include "anomkit/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "anomkit/errors.hpp"
#include "json.hpp"

namespace anomkit {

using nlohmann::json;

namespace {

json to_json(const PipelineConfig& c) {
  const auto& p = c.preprocess;
  const auto& t = c.train;
  return json{
      {"preset", to_string(c.preset)},
      {"seed", c.seed},
      {"preprocess",
       {{"smoothness", p.smoothness},
        {"min_thickness", p.min_thickness},
        {"target_area", p.target_area},
        {"compactness", p.compactness},
        {"slic_iterations", p.slic_iterations},
        {"low_percentile", p.low_percentile},
        {"high_percentile", p.high_percentile}}},
      {"dcae",
       {{"lr", t.lr},
        {"momentum", t.momentum},
        {"epochs", t.epochs},
        {"batch", t.batch},
        {"max_steps", t.max_steps},
        {"dropout", c.model.dropout},
        {"fusion_elu", c.model.fusion_elu},
        {"fusion_epochs", t.fusion_epochs},
        {"fusion_lr", t.fusion_lr},
        {"masking", t.masking},
        {"train_cap", c.train_cap}}},
      {"ocsvm", {{"nu", c.nu}, {"tol", c.svm_tol}, {"max_iter", c.svm_max_iter}, {"train_cap", c.svm_cap}}},
      {"cluster",
       {{"k_min", c.cluster.k_min},
        {"k_max", c.cluster.k_max},
        {"restarts", c.cluster.restarts},
        {"max_iter", c.cluster.max_iter},
        {"cap", c.cluster_cap}}},
      {"metrics",
       {{"C", c.cv.svm.C},
        {"tol", c.cv.svm.tol},
        {"max_iter", c.cv.svm.max_iter},
        {"folds", c.cv.folds},
        {"per_class", c.per_class}}},
  };
}

// Reads the keys of one JSON object into fields, rejecting anything unexpected.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  Section& get(const char* key, T& field) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw UsageError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw UsageError("");
        if constexpr (std::is_unsigned_v<T>)
          if (it->get<long long>() < 0) throw UsageError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw UsageError("");
      }
      field = it->get<T>();
    } catch (const std::exception&) {
      throw UsageError("config: '" + name_ + "." + key + "' has the wrong type");
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw UsageError("config: unknown key '" + (name_.empty() ? key : name_ + "." + key) + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

}  // namespace

std::string config_to_json(const PipelineConfig& config) { return to_json(config).dump(2) + "\n"; }

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  Section root(j, "");
  std::string preset = "desk";
  root.get("preset", preset);
  PipelineConfig c;
  try {
    c = default_config(parse_model_preset(preset));
  } catch (const ParameterError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  root.get("seed", c.seed);
  if (const json* s = root.child("preprocess")) {
    auto& p = c.preprocess;
    Section(*s, "preprocess")
        .get("smoothness", p.smoothness)
        .get("min_thickness", p.min_thickness)
        .get("target_area", p.target_area)
        .get("compactness", p.compactness)
        .get("slic_iterations", p.slic_iterations)
        .get("low_percentile", p.low_percentile)
        .get("high_percentile", p.high_percentile)
        .finish();
  }
  if (const json* s = root.child("dcae")) {
    auto& t = c.train;
    Section(*s, "dcae")
        .get("lr", t.lr)
        .get("momentum", t.momentum)
        .get("epochs", t.epochs)
        .get("batch", t.batch)
        .get("max_steps", t.max_steps)
        .get("dropout", c.model.dropout)
        .get("fusion_elu", c.model.fusion_elu)
        .get("fusion_epochs", t.fusion_epochs)
        .get("fusion_lr", t.fusion_lr)
        .get("masking", t.masking)
        .get("train_cap", c.train_cap)
        .finish();
  }
  if (const json* s = root.child("ocsvm")) {
    Section(*s, "ocsvm")
        .get("nu", c.nu)
        .get("tol", c.svm_tol)
        .get("max_iter", c.svm_max_iter)
        .get("train_cap", c.svm_cap)
        .finish();
  }
  if (const json* s = root.child("cluster")) {
    Section(*s, "cluster")
        .get("k_min", c.cluster.k_min)
        .get("k_max", c.cluster.k_max)
        .get("restarts", c.cluster.restarts)
        .get("max_iter", c.cluster.max_iter)
        .get("cap", c.cluster_cap)
        .finish();
  }
  if (const json* s = root.child("metrics")) {
    Section(*s, "metrics")
        .get("C", c.cv.svm.C)
        .get("tol", c.cv.svm.tol)
        .get("max_iter", c.cv.svm.max_iter)
        .get("folds", c.cv.folds)
        .get("per_class", c.per_class)
        .finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace anomkit
