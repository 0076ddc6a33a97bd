#pragma once

#include <string>

#include "cpmf/generation.hpp"
#include "cpmf/model.hpp"
#include "cpmf/training.hpp"

namespace cpmf {

// Merged view of the model, training, and sampler settings, parsed from a
// "key = value" config file with flag overrides on top. vocab_size 0 means
// "take it from the loaded vocabulary".
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  std::size_t seq_len = 1024;

  RunConfig() { model.vocab_size = 0; }

  static RunConfig load(const std::string& path);

  // Applies one key/value pair; throws ConfigError on unknown keys or bad
  // values.
  void apply(const std::string& key, const std::string& value);

  // Renders the effective settings back as config-file text.
  std::string to_text() const;
};

}  // namespace cpmf
