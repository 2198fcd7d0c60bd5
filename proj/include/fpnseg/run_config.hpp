#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpnseg/augment.hpp"
#include "fpnseg/model.hpp"
#include "fpnseg/trainer.hpp"

namespace fpnseg {

// Every tunable setting, addressed by flat dotted keys ("model.*",
// "train.*", "loss.*", "augment.*"). The key "model.preset" (resnet50 or
// tiny) resets all model.* keys and is applied before any other key.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;

  // Sets one key from its text value. Unknown keys and malformed values
  // throw ConfigError.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  // All keys except model.preset, in a fixed order.
  static const std::vector<std::string>& keys();
  std::vector<std::pair<std::string, std::string>> items() const;

  void validate() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key = value" lines; '#' starts a comment. Duplicate keys are an
// error; the line number is reported for every error.
KeyValues parse_key_values(std::string_view text);

// Applies model.preset first, then the remaining pairs in order.
void apply_key_values(RunConfig& config, const KeyValues& kv);

RunConfig load_run_config(const std::filesystem::path& path);
std::string to_text(const RunConfig& config);

// "key=value" override as given on the command line.
std::pair<std::string, std::string> parse_override(std::string_view text);

// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace fpnseg
