#include "stgcrnn/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stgcrnn/errors.hpp"

namespace stgcrnn {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "conv_kind",  "order",          "epsilon",        "laplacian_kind",
      "lambda_max_mode", "cheb_recurrence", "history",  "horizon",
      "hidden_units", "num_layers",   "target_feature", "base_lr",
      "decay_every", "decay_ratio",   "min_lr",         "batch_size",
      "max_epochs",  "patience",      "clip_norm",      "validation_fraction",
      "normalization", "stride",      "seed",           "graph",
      "dataset",     "split_boundary", "test_fraction", "units",
  };
  return keys;
}

}  // namespace

std::string RunConfig::to_json() const {
  nlohmann::json j;
  j["conv_kind"] = conv_kind;
  j["order"] = order;
  j["epsilon"] = epsilon;
  j["laplacian_kind"] = laplacian_kind;
  j["lambda_max_mode"] = lambda_max_mode;
  j["cheb_recurrence"] = cheb_recurrence;
  j["history"] = history;
  j["horizon"] = horizon;
  j["hidden_units"] = hidden_units;
  j["num_layers"] = num_layers;
  j["target_feature"] = target_feature;
  j["base_lr"] = base_lr;
  j["decay_every"] = decay_every;
  j["decay_ratio"] = decay_ratio;
  j["min_lr"] = min_lr;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["clip_norm"] = clip_norm;
  j["validation_fraction"] = validation_fraction;
  j["normalization"] = normalization;
  j["stride"] = stride;
  j["seed"] = seed;
  j["graph"] = graph;
  j["dataset"] = dataset;
  j["split_boundary"] = split_boundary;
  j["test_fraction"] = test_fraction;
  j["units"] = units;
  return j.dump(2);
}

void RunConfig::validate() const {
  // enum-valued fields fail fast here; numeric ranges are covered by
  // TrainConfig::validate and the module constructors
  conv::conv_kind_from_string(conv_kind);
  graph::laplacian_kind_from_string(laplacian_kind);
  if (lambda_max_mode != "power_iteration" && lambda_max_mode != "fixed_two")
    throw ConfigError("lambda_max_mode: expected power_iteration or fixed_two, got '" +
                      lambda_max_mode + "'");
  if (cheb_recurrence != "standard" && cheb_recurrence != "as_printed")
    throw ConfigError("cheb_recurrence: expected standard or as_printed, got '" +
                      cheb_recurrence + "'");
  if (normalization != "minmax" && normalization != "zscore")
    throw ConfigError("normalization: expected minmax or zscore, got '" + normalization + "'");
  if (order < 0) throw ConfigError("order: must be >= 0");
  if (epsilon < 0.0 || epsilon >= 1.0) throw ConfigError("epsilon: must lie in [0, 1)");
  if (history == 0) throw ConfigError("history: must be >= 1");
  if (horizon == 0) throw ConfigError("horizon: must be >= 1");
  if (stride == 0) throw ConfigError("stride: must be >= 1");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw ConfigError("validation_fraction: must lie in (0, 1)");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction: must lie in [0, 1)");
  if (target_feature.empty()) throw ConfigError("target_feature: must not be empty");
  train_config().validate();
}

model::ModelConfig RunConfig::model_config(std::size_t input_dim) const {
  model::ModelConfig mc;
  mc.kind = conv::conv_kind_from_string(conv_kind);
  mc.order = order;
  mc.input_dim = input_dim;
  mc.hidden_dim = hidden_units;
  mc.num_layers = num_layers;
  mc.history = history;
  mc.horizon = horizon;
  mc.laplacian_kind = graph::laplacian_kind_from_string(laplacian_kind);
  mc.lambda_mode = lambda_max_mode == "fixed_two" ? graph::LambdaMaxMode::fixed_two
                                                  : graph::LambdaMaxMode::power_iteration;
  mc.recurrence = cheb_recurrence == "as_printed" ? graph::ChebRecurrence::as_printed
                                                  : graph::ChebRecurrence::standard;
  return mc;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig tc;
  tc.base_lr = base_lr;
  tc.decay_every = decay_every;
  tc.decay_ratio = decay_ratio;
  tc.min_lr = min_lr;
  tc.batch_size = batch_size;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.hidden_units = hidden_units;
  tc.num_layers = num_layers;
  tc.seed = seed;
  tc.clip_norm = clip_norm;
  return tc;
}

data::NormalizationMode RunConfig::normalization_mode() const {
  return normalization == "zscore" ? data::NormalizationMode::zscore
                                   : data::NormalizationMode::minmax;
}

RunConfig run_config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: document must be a JSON object");

  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!known_keys().contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }

  RunConfig c;
  const auto get = [&doc](const char* key, auto& slot) {
    if (doc.contains(key)) {
      try {
        slot = doc.at(key).template get<std::decay_t<decltype(slot)>>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
      }
    }
  };
  get("conv_kind", c.conv_kind);
  get("order", c.order);
  get("epsilon", c.epsilon);
  get("laplacian_kind", c.laplacian_kind);
  get("lambda_max_mode", c.lambda_max_mode);
  get("cheb_recurrence", c.cheb_recurrence);
  get("history", c.history);
  get("horizon", c.horizon);
  get("hidden_units", c.hidden_units);
  get("num_layers", c.num_layers);
  get("target_feature", c.target_feature);
  get("base_lr", c.base_lr);
  get("decay_every", c.decay_every);
  get("decay_ratio", c.decay_ratio);
  get("min_lr", c.min_lr);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("clip_norm", c.clip_norm);
  get("validation_fraction", c.validation_fraction);
  get("normalization", c.normalization);
  get("stride", c.stride);
  get("seed", c.seed);
  get("graph", c.graph);
  get("dataset", c.dataset);
  get("split_boundary", c.split_boundary);
  get("test_fraction", c.test_fraction);
  get("units", c.units);
  return c;
}

void apply_env_overrides(RunConfig& config) {
  nlohmann::json doc = nlohmann::json::parse(config.to_json());
  bool changed = false;
  for (const std::string& key : known_keys()) {
    std::string env_name = "APP_";
    for (const char ch : key) env_name += static_cast<char>(std::toupper(ch));
    const char* value = std::getenv(env_name.c_str());
    if (!value) continue;
    changed = true;
    const auto& slot = doc.at(key);
    if (slot.is_string()) {
      doc[key] = std::string(value);
    } else {
      try {
        doc[key] = nlohmann::json::parse(value);
      } catch (const nlohmann::json::parse_error&) {
        throw ConfigError(env_name + ": cannot parse '" + std::string(value) + "'");
      }
    }
  }
  if (changed) config = run_config_from_json(doc.dump());
}

RunConfig load_run_config(const std::filesystem::path& path, bool apply_env) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = run_config_from_json(ss.str());
  if (apply_env) apply_env_overrides(c);
  return c;
}

}  // namespace stgcrnn
