#include "scd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace scd {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& section,
                         const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + section + "." + it.key() + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& section, const std::string& key,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + section + "." + key + "' has the wrong type");
  }
}

template <typename T>
T require(const json& obj, const std::string& section, const std::string& key) {
  if (!obj.contains(key)) {
    throw ConfigError("missing required field '" + section + "." + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + section + "." + key + "' has the wrong type");
  }
}

EmbeddingConfig parse_embedding(const json& obj) {
  reject_unknown_keys(obj, "embedding",
                      {"preset", "final_batchnorm", "final_relu",
                       "input_channels", "exemplar_size", "search_size",
                       "layers"});
  const bool final_bn = get_or(obj, "embedding", "final_batchnorm", true);
  const bool final_relu = get_or(obj, "embedding", "final_relu", false);
  if (obj.contains("preset")) {
    const auto preset = require<std::string>(obj, "embedding", "preset");
    if (preset == "table1") return EmbeddingConfig::table1(final_bn, final_relu);
    if (preset == "desk") return EmbeddingConfig::desk(final_bn, final_relu);
    throw ConfigError("embedding.preset must be 'table1' or 'desk', got '" +
                      preset + "'");
  }
  EmbeddingConfig cfg;
  cfg.layers.clear();
  cfg.input_channels = require<int>(obj, "embedding", "input_channels");
  cfg.exemplar_size = require<int>(obj, "embedding", "exemplar_size");
  cfg.search_size = require<int>(obj, "embedding", "search_size");
  if (!obj.contains("layers") || !obj.at("layers").is_array() ||
      obj.at("layers").empty()) {
    throw ConfigError("embedding.layers must be a non-empty array");
  }
  int index = 0;
  for (const auto& entry : obj.at("layers")) {
    const std::string section = "embedding.layers[" + std::to_string(index++) + "]";
    reject_unknown_keys(entry, section,
                        {"kind", "out_channels", "kernel", "stride",
                         "batchnorm", "relu"});
    const auto kind = require<std::string>(entry, section, "kind");
    if (kind == "conv") {
      append_conv(cfg, require<int>(entry, section, "out_channels"),
                  require<int>(entry, section, "kernel"),
                  get_or(entry, section, "stride", 1),
                  get_or(entry, section, "batchnorm", true),
                  get_or(entry, section, "relu", true));
    } else if (kind == "pool") {
      append_pool(cfg, require<int>(entry, section, "kernel"),
                  get_or(entry, section, "stride", 1));
    } else {
      throw ConfigError(section + ".kind must be 'conv' or 'pool'");
    }
  }
  return cfg;
}

TrainConfig parse_train(const json& obj) {
  reject_unknown_keys(obj, "train",
                      {"batch_size", "epochs", "samples_per_epoch",
                       "lr_initial", "lr_final", "weight_decay", "seed",
                       "label_radius"});
  TrainConfig cfg;
  cfg.batch_size = get_or(obj, "train", "batch_size", cfg.batch_size);
  cfg.epochs = get_or(obj, "train", "epochs", cfg.epochs);
  cfg.samples_per_epoch =
      get_or(obj, "train", "samples_per_epoch", cfg.samples_per_epoch);
  cfg.lr_initial = get_or(obj, "train", "lr_initial", cfg.lr_initial);
  cfg.lr_final = get_or(obj, "train", "lr_final", cfg.lr_final);
  cfg.weight_decay = get_or(obj, "train", "weight_decay", cfg.weight_decay);
  cfg.seed = get_or(obj, "train", "seed", cfg.seed);
  cfg.label_radius = get_or(obj, "train", "label_radius", cfg.label_radius);
  return cfg;
}

ScdConfig parse_scd(const json& obj) {
  reject_unknown_keys(obj, "scd",
                      {"enabled", "epsilon", "pair_budget", "layers", "alpha",
                       "beta", "denom_stabilizer", "include_exemplar_branch"});
  ScdConfig cfg;
  cfg.enabled = get_or(obj, "scd", "enabled", true);
  cfg.epsilon = get_or(obj, "scd", "epsilon", cfg.epsilon);
  cfg.pair_budget = get_or(obj, "scd", "pair_budget", cfg.pair_budget);
  cfg.layers = get_or(obj, "scd", "layers", cfg.layers);
  cfg.alpha = get_or(obj, "scd", "alpha", cfg.alpha);
  cfg.beta = get_or(obj, "scd", "beta", cfg.beta);
  cfg.denom_stabilizer =
      get_or(obj, "scd", "denom_stabilizer", cfg.denom_stabilizer);
  cfg.include_exemplar_branch =
      get_or(obj, "scd", "include_exemplar_branch", cfg.include_exemplar_branch);
  return cfg;
}

OutputConfig parse_output(const json& obj) {
  reject_unknown_keys(obj, "output", {"dir", "metric_cadence"});
  OutputConfig cfg;
  cfg.dir = get_or(obj, "output", "dir", cfg.dir);
  cfg.metric_cadence = get_or(obj, "output", "metric_cadence", cfg.metric_cadence);
  return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  const int conv_count = embedding.conv_count();
  if (conv_count < 1) {
    throw ConfigError("embedding must contain at least one conv layer");
  }
  for (int l : train.scd.layers) {
    if (l < 1 || l > conv_count) {
      throw ConfigError("scd.layers references conv" + std::to_string(l) +
                        " but the embedding has " + std::to_string(conv_count) +
                        " conv layers");
    }
  }
  std::vector<ActivationShape> ex;
  std::vector<ActivationShape> se;
  try {
    ex = infer_shapes(embedding, embedding.exemplar_size, embedding.exemplar_size);
    se = infer_shapes(embedding, embedding.search_size, embedding.search_size);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("embedding geometry invalid: ") + e.what());
  }
  if (ex.back().h > se.back().h || ex.back().w > se.back().w) {
    throw ConfigError("exemplar embedding larger than search embedding");
  }
  if (output.metric_cadence < 1 ||
      output.metric_cadence > train.steps_per_epoch()) {
    throw ConfigError("output.metric_cadence must lie in [1, steps_per_epoch]");
  }
  const int score_h = se.back().h - ex.back().h + 1;
  auto grid_check = make_labels(score_h, score_h, (score_h - 1) / 2,
                                (score_h - 1) / 2, train.label_radius);
  (void)grid_check;  // throws if the radius leaves no negatives
}

ExperimentConfig ExperimentConfig::desk_default(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.embedding_preset = "desk";
  cfg.embedding = EmbeddingConfig::desk();
  cfg.train.batch_size = 8;
  cfg.train.epochs = 10;
  cfg.train.samples_per_epoch = 200;
  cfg.train.seed = seed;
  cfg.train.label_radius = 1.0;
  cfg.train.scd.enabled = true;
  cfg.train.scd.epsilon = 0.3;
  cfg.train.scd.layers = {3};
  cfg.output.dir = "runs/desk";
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) {
    throw ConfigError("config root must be a JSON object");
  }
  reject_unknown_keys(root, "config", {"embedding", "train", "scd", "output"});
  if (!root.contains("embedding")) {
    throw ConfigError("missing required section 'embedding'");
  }

  ExperimentConfig cfg;
  if (root.at("embedding").contains("preset")) {
    cfg.embedding_preset = root.at("embedding").at("preset").get<std::string>();
  }
  cfg.embedding = parse_embedding(root.at("embedding"));
  if (root.contains("train")) cfg.train = parse_train(root.at("train"));
  if (root.contains("scd")) {
    cfg.train.scd = parse_scd(root.at("scd"));
  } else {
    cfg.train.scd.enabled = false;
    cfg.train.scd.layers.clear();
  }
  if (root.contains("output")) cfg.output = parse_output(root.at("output"));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return parse_experiment_config(buffer.str());
}

}  // namespace scd
