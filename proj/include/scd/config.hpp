#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "scd/trainer.hpp"

namespace scd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputConfig {
  std::string dir = "runs/out";
  int metric_cadence = 1;  // metric rows emitted per epoch
};

// Full experiment description: embedding preset (or inline stack),
// training recipe, SCD settings, output location.
struct ExperimentConfig {
  std::string embedding_preset;  // "table1", "desk", or empty when inline
  EmbeddingConfig embedding;
  TrainConfig train;
  OutputConfig output;

  void validate() const;

  // CPU-scale default: desk embedding, batch 8, 10 epochs, 200 pairs per
  // epoch, SCD on conv3 with margin 0.3.
  static ExperimentConfig desk_default(std::uint64_t seed);
};

// Strict parser: unknown keys anywhere are rejected with the offending
// field named.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace scd
