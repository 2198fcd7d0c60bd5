#include "fpnseg/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "fpnseg/error.hpp"

namespace fpnseg {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " +
                    std::string(key) + ": expected " + expected);
}

int64_t parse_int(std::string_view key, std::string_view v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    bad_value(key, v, "an integer");
  return out;
}

uint64_t parse_uint(std::string_view key, std::string_view v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::array<int64_t, 4> parse_int4(std::string_view key, std::string_view v) {
  auto parts = split_list(v);
  if (parts.size() != 4) bad_value(key, v, "four comma-separated integers");
  std::array<int64_t, 4> out{};
  for (size_t i = 0; i < 4; ++i) out[i] = parse_int(key, parts[i]);
  return out;
}

std::vector<double> parse_doubles(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (auto p : split_list(v)) out.push_back(parse_double(key, p));
  return out;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

template <typename Seq>
std::string join(const Seq& seq, const std::function<std::string(double)>& f) {
  std::string out;
  for (const auto& v : seq) {
    if (!out.empty()) out += ",";
    out += f(static_cast<double>(v));
  }
  return out;
}

std::string format_int(int64_t v) { return std::to_string(v); }

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FPNSEG_INT_FIELD(name, member)                                         \
  {name,                                                                       \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                \
      c.member = parse_int(k, v);                                              \
    },                                                                         \
    [](const RunConfig& c) { return format_int(c.member); }}}
#define FPNSEG_DOUBLE_FIELD(name, member)                                      \
  {name,                                                                       \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                \
      c.member = parse_double(k, v);                                           \
    },                                                                         \
    [](const RunConfig& c) { return format_double(c.member); }}}
#define FPNSEG_BOOL_FIELD(name, member)                                        \
  {name,                                                                       \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                \
      c.member = parse_bool(k, v);                                             \
    },                                                                         \
    [](const RunConfig& c) { return format_bool(c.member); }}}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      FPNSEG_INT_FIELD("model.in_channels", model.in_channels),
      FPNSEG_INT_FIELD("model.stem_channels", model.stem_channels),
      {"model.stage_widths",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.model.stage_widths = parse_int4(k, v);
        },
        [](const RunConfig& c) {
          return join(c.model.stage_widths, [](double d) {
            return format_int(static_cast<int64_t>(d));
          });
        }}},
      {"model.stage_blocks",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.model.stage_blocks = parse_int4(k, v);
        },
        [](const RunConfig& c) {
          return join(c.model.stage_blocks, [](double d) {
            return format_int(static_cast<int64_t>(d));
          });
        }}},
      FPNSEG_INT_FIELD("model.bottleneck_expansion", model.bottleneck_expansion),
      FPNSEG_INT_FIELD("model.lateral_channels", model.lateral_channels),
      FPNSEG_INT_FIELD("model.pyramid_channels", model.pyramid_channels),
      FPNSEG_INT_FIELD("model.head_channels", model.head_channels),
      FPNSEG_INT_FIELD("model.num_classes", model.num_classes),
      FPNSEG_DOUBLE_FIELD("model.dropout_p", model.dropout_p),
      FPNSEG_DOUBLE_FIELD("model.bn_momentum", model.bn_momentum),
      FPNSEG_DOUBLE_FIELD("model.bn_epsilon", model.bn_epsilon),
      FPNSEG_DOUBLE_FIELD("model.classifier_init_std", model.classifier_init_std),

      FPNSEG_DOUBLE_FIELD("train.lr", train.adam.lr0),
      FPNSEG_DOUBLE_FIELD("train.decay", train.adam.decay),
      {"train.decay_mode",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "lr")
            c.train.adam.decay_mode = DecayMode::LearningRate;
          else if (v == "weight")
            c.train.adam.decay_mode = DecayMode::Weight;
          else
            bad_value(k, v, "lr or weight");
        },
        [](const RunConfig& c) {
          return std::string(c.train.adam.decay_mode == DecayMode::LearningRate
                                 ? "lr"
                                 : "weight");
        }}},
      FPNSEG_DOUBLE_FIELD("train.beta1", train.adam.beta1),
      FPNSEG_DOUBLE_FIELD("train.beta2", train.adam.beta2),
      FPNSEG_DOUBLE_FIELD("train.adam_epsilon", train.adam.epsilon),
      FPNSEG_INT_FIELD("train.batch_size", train.batch_size),
      FPNSEG_INT_FIELD("train.iterations", train.iterations),
      FPNSEG_INT_FIELD("train.validate_every", train.validate_every),
      FPNSEG_INT_FIELD("train.keep_best", train.keep_best),
      FPNSEG_DOUBLE_FIELD("train.holdout_fraction", train.holdout_fraction),
      {"train.seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.train.seed = parse_uint(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},

      FPNSEG_DOUBLE_FIELD("loss.alpha", train.loss.alpha),
      FPNSEG_DOUBLE_FIELD("loss.beta", train.loss.beta),
      {"loss.class_weights",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.train.loss.class_weights = parse_doubles(k, v);
        },
        [](const RunConfig& c) {
          return join(c.train.loss.class_weights, format_double);
        }}},
      FPNSEG_DOUBLE_FIELD("loss.jaccard_epsilon", train.loss.jaccard_epsilon),
      FPNSEG_DOUBLE_FIELD("loss.ce_epsilon", train.loss.ce_epsilon),

      FPNSEG_BOOL_FIELD("augment.geometric", augment.geometric),
      FPNSEG_BOOL_FIELD("augment.photometric", augment.photometric),
      FPNSEG_DOUBLE_FIELD("augment.scale_min", augment.scale_min),
      FPNSEG_DOUBLE_FIELD("augment.scale_max", augment.scale_max),
      FPNSEG_DOUBLE_FIELD("augment.max_rotation_deg", augment.max_rotation_deg),
      FPNSEG_INT_FIELD("augment.crop_size", augment.crop_size),
      FPNSEG_DOUBLE_FIELD("augment.brightness_min", augment.brightness_min),
      FPNSEG_DOUBLE_FIELD("augment.brightness_max", augment.brightness_max),
      FPNSEG_DOUBLE_FIELD("augment.contrast_min", augment.contrast_min),
      FPNSEG_DOUBLE_FIELD("augment.contrast_max", augment.contrast_max),
      FPNSEG_DOUBLE_FIELD("augment.hue_min_deg", augment.hue_min_deg),
      FPNSEG_DOUBLE_FIELD("augment.hue_max_deg", augment.hue_max_deg),
      FPNSEG_DOUBLE_FIELD("augment.saturation_min", augment.saturation_min),
      FPNSEG_DOUBLE_FIELD("augment.saturation_max", augment.saturation_max),
      FPNSEG_DOUBLE_FIELD("augment.value_min", augment.value_min),
      FPNSEG_DOUBLE_FIELD("augment.value_max", augment.value_max),
  };
  return table;
}

#undef FPNSEG_INT_FIELD
#undef FPNSEG_DOUBLE_FIELD
#undef FPNSEG_BOOL_FIELD

const Field& find_field(std::string_view key) {
  static const std::map<std::string, const Field*, std::less<>> index = [] {
    std::map<std::string, const Field*, std::less<>> m;
    for (const auto& [k, f] : field_table()) m.emplace(k, &f);
    return m;
  }();
  auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key: " + std::string(key));
  return *it->second;
}

void apply_preset(RunConfig& c, std::string_view v) {
  if (v == "resnet50")
    c.model = ModelConfig::resnet50();
  else if (v == "tiny")
    c.model = ModelConfig::tiny();
  else
    bad_value("model.preset", v, "resnet50 or tiny");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (key == "model.preset") {
    apply_preset(*this, value);
    return;
  }
  find_field(key).set(*this, key, value);
}

std::string RunConfig::get(std::string_view key) const {
  return find_field(key).get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : field_table()) out.push_back(name);
    return out;
  }();
  return k;
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, f] : field_table()) out.emplace_back(name, f.get(*this));
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  augment.validate();
  if (model.num_classes != kNumClasses)
    throw ConfigError("model.num_classes must be " + std::to_string(kNumClasses));
  if (augment.crop_size % 32 != 0)
    throw ConfigError("augment.crop_size must be a multiple of 32");
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
    out.emplace_back(key, value);
  }
  return out;
}

void apply_key_values(RunConfig& config, const KeyValues& kv) {
  for (const auto& [k, v] : kv)
    if (k == "model.preset") config.set(k, v);
  for (const auto& [k, v] : kv)
    if (k != "model.preset") config.set(k, v);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_key_values(c, parse_key_values(ss.str()));
  return c;
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.items()) out += k + " = " + v + "\n";
  return out;
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
  const size_t eq = text.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(text) + "' is not key=value");
  std::string key(trim(text.substr(0, eq)));
  if (key.empty()) throw ConfigError("override '" + std::string(text) + "' has no key");
  return {key, std::string(trim(text.substr(eq + 1)))};
}

}  // namespace fpnseg
