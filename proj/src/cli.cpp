#include "fpnseg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "fpnseg/checkpoint.hpp"
#include "fpnseg/dataset.hpp"
#include "fpnseg/error.hpp"
#include "fpnseg/inference.hpp"
#include "fpnseg/png_io.hpp"
#include "fpnseg/run_config.hpp"
#include "fpnseg/synth.hpp"
#include "fpnseg/trainer.hpp"

namespace fpnseg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string pred;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
  bool tta = false;
  int64_t count = 8;
  int64_t size = 96;
};

std::string format_report(const IoUReport& r) {
  std::string s = "mean_iou=" + format_double(r.mean) + " iou=";
  for (int c = 0; c < kNumClasses; ++c) {
    if (c) s += ",";
    s += r.per_class[static_cast<size_t>(c)] ? format_double(*r.per_class[static_cast<size_t>(c)])
                                             : std::string("na");
  }
  return s;
}

RunConfig resolve_config(const Options& o, RunConfig base) {
  KeyValues kv;
  if (!o.config.empty()) {
    std::ifstream in(o.config, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + o.config);
    std::stringstream ss;
    ss << in.rdbuf();
    kv = parse_key_values(ss.str());
  }
  for (const auto& text : o.overrides) kv.push_back(parse_override(text));
  if (o.seed) kv.emplace_back("train.seed", std::to_string(*o.seed));
  apply_key_values(base, kv);
  base.validate();
  return base;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.data.empty() || o.out.empty()) throw ValueError("train needs --data and --out");
  std::optional<Checkpoint> resume;
  if (!o.checkpoint.empty()) resume = load_checkpoint(o.checkpoint);
  RunConfig config = resolve_config(o, resume ? resume->config : RunConfig{});

  ModelState model;
  if (resume) {
    if (!(config.model == resume->model.config))
      throw ConfigError("model.* keys differ from the checkpoint being resumed");
    model = std::move(resume->model);
  } else {
    model = build_model(config.model, RngStream(config.train.seed).derive("model"));
  }

  Dataset data = load_dataset(o.data);
  fs::create_directories(o.out);
  const fs::path log_path = fs::path(o.out) / "train.log";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path.string() + " for writing");

  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r) {
    log << "iter=" << r.iteration << " loss=" << format_double(r.loss) << "\n";
  };
  hooks.on_validation = [&](const ValidationRecord& r) {
    log << "val iter=" << r.iteration << " " << format_report(r.report) << "\n";
    log.flush();
    out << "iteration " << r.iteration << ": " << format_report(r.report) << "\n";
  };
  hooks.save = [&](int64_t iteration, const ModelState& m) {
    const fs::path p = fs::path(o.out) / ("best_" + std::to_string(iteration) + ".ckpt");
    save_checkpoint(p, m, config);
    log << "checkpoint iter=" << iteration << " path=" << p.filename().string() << "\n";
    return p.string();
  };
  hooks.remove = [&](const std::string& p) {
    std::error_code ec;
    fs::remove(p, ec);
    log << "removed path=" << fs::path(p).filename().string() << "\n";
  };

  TrainLog result = train(model, data.samples, config.train, config.augment, hooks);
  save_checkpoint(fs::path(o.out) / "last.ckpt", model, config);
  log.flush();
  if (!log) throw IoError("failed writing " + log_path.string());
  out << "trained " << result.iterations.size() << " iterations; kept";
  for (const auto& k : result.kept) out << " " << fs::path(k.path).filename().string();
  out << "\n";
  return kExitOk;
}

// Inputs for predict: a single PNG, or every <id>_sat.png in a directory.
std::vector<std::pair<std::string, fs::path>> prediction_inputs(const fs::path& p) {
  std::vector<std::pair<std::string, fs::path>> out;
  auto id_of = [](const fs::path& f) {
    std::string stem = f.stem().string();
    const std::string suffix = "_sat";
    if (stem.size() > suffix.size() && stem.ends_with(suffix))
      stem.resize(stem.size() - suffix.size());
    return stem;
  };
  if (fs::is_directory(p)) {
    for (const auto& f : fs::directory_iterator(p))
      if (f.is_regular_file() && f.path().filename().string().ends_with("_sat.png"))
        out.emplace_back(id_of(f.path()), f.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw DataError("no samples found in " + p.string());
  } else {
    if (!fs::exists(p)) throw DataError("input not found: " + p.string());
    out.emplace_back(id_of(p), p);
  }
  return out;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.data.empty() || o.out.empty())
    throw ValueError("predict needs --checkpoint, --data and --out");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  fs::create_directories(o.out);
  for (const auto& [id, path] : prediction_inputs(o.data)) {
    Tensor image = image_to_tensor(read_png(path));
    Tensor probs = o.tta ? tta_predict(ck.model, image) : predict(ck.model, image);
    const fs::path dest = fs::path(o.out) / (id + "_mask.png");
    write_png(dest, encode_mask(argmax_labels(probs)));
    out << dest.string() << "\n";
  }
  return kExitOk;
}

std::map<std::string, fs::path> mask_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("directory not found: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& f : fs::directory_iterator(dir)) {
    const std::string name = f.path().filename().string();
    if (f.is_regular_file() && name.ends_with("_mask.png"))
      out[name.substr(0, name.size() - 9)] = f.path();
  }
  return out;
}

int cmd_score(const Options& o, std::ostream& out) {
  if (o.pred.empty() || o.data.empty())
    throw ValueError("score needs --pred (predicted masks) and --data (ground truth)");
  auto pred = mask_files(o.pred);
  auto truth = mask_files(o.data);
  if (truth.empty()) throw DataError("no samples found in " + o.data);
  for (const auto& [id, p] : pred)
    if (!truth.count(id)) throw DataError("no ground truth for " + p.string());
  ConfusionCounts counts;
  for (const auto& [id, p] : truth) {
    auto it = pred.find(id);
    if (it == pred.end()) throw DataError("no prediction for " + p.string());
    LabelMap t = decode_mask(read_png(p));
    LabelMap q = decode_mask(read_png(it->second));
    if (t.height != q.height || t.width != q.width)
      throw DataError("size mismatch between " + p.string() + " and " + it->second.string());
    counts.add(q, t);
  }
  IoUReport r = IoUReport::from_counts(counts);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& v = r.per_class[static_cast<size_t>(c)];
    out << "class=" << kClassTable[static_cast<size_t>(c)].name
        << " iou=" << (v ? format_double(*v) : std::string("na")) << "\n";
  }
  out << "mean_iou=" << format_double(r.mean) << "\n";
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ValueError("synth needs --out");
  write_synth_dataset(o.out, o.count, o.size, o.seed.value_or(0));
  out << "wrote " << o.count << " pairs to " << o.out << "\n";
  return kExitOk;
}

int cmd_encode(const Options& o, std::ostream&) {
  if (o.data.empty() || o.out.empty()) throw ValueError("encode needs --data and --out");
  write_png(o.out, encode_mask(read_label_png(o.data)));
  return kExitOk;
}

int cmd_decode(const Options& o, std::ostream&) {
  if (o.data.empty() || o.out.empty()) throw ValueError("decode needs --data and --out");
  write_label_png(o.out, decode_mask(read_png(o.data)));
  return kExitOk;
}

int exit_code_for(const std::string& kind) {
  static const std::map<std::string, int> codes = {
      {"config_error", kExitConfig},         {"data_error", kExitData},
      {"io_error", kExitIo},                 {"checkpoint_error", kExitCheckpoint},
      {"shape_error", kExitShape},           {"value_error", kExitValue},
      {"training_error", kExitTraining},
  };
  auto it = codes.find(kind);
  return it == codes.end() ? kExitInternal : it->second;
}

void print_error(std::ostream& err, const std::string& kind, std::string message) {
  for (char& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  err << kind << ": " << message << std::endl;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-pyramid land-cover segmentation"};
  app.require_subcommand(1);
  Options o;

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  train_cmd->add_option("--config", o.config, "Key-value configuration file");
  train_cmd->add_option("--data", o.data, "Directory of <id>_sat.png / <id>_mask.png pairs");
  train_cmd->add_option("--out", o.out, "Output directory for checkpoints and train.log");
  train_cmd->add_option("--checkpoint", o.checkpoint, "Resume from this checkpoint");
  train_cmd->add_option("--seed", o.seed, "Overrides train.seed");
  train_cmd->add_option("--set", o.overrides, "Override a config key (key=value)");

  auto* predict_cmd = app.add_subcommand("predict", "Predict RGB masks");
  predict_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  predict_cmd->add_option("--data", o.data, "An image, or a directory of <id>_sat.png");
  predict_cmd->add_option("--out", o.out, "Output directory for <id>_mask.png");
  predict_cmd->add_flag("--tta", o.tta, "Average over the four right-angle rotations");

  auto* score_cmd = app.add_subcommand("score", "IoU of predicted masks against ground truth");
  score_cmd->add_option("--pred", o.pred, "Directory of predicted <id>_mask.png");
  score_cmd->add_option("--data", o.data, "Directory of ground-truth <id>_mask.png");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--out", o.out, "Output directory");
  synth_cmd->add_option("--seed", o.seed, "Generator seed");
  synth_cmd->add_option("--count", o.count, "Number of image/mask pairs");
  synth_cmd->add_option("--size", o.size, "Image side, a multiple of 32");

  auto* encode_cmd = app.add_subcommand("encode", "Class-index PNG to RGB mask");
  encode_cmd->add_option("--data", o.data, "Greyscale PNG of class indices 0..6");
  encode_cmd->add_option("--out", o.out, "RGB mask PNG");

  auto* decode_cmd = app.add_subcommand("decode", "RGB mask to class-index PNG");
  decode_cmd->add_option("--data", o.data, "RGB mask PNG");
  decode_cmd->add_option("--out", o.out, "Greyscale PNG of class indices 0..6");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage_error", e.what());
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (predict_cmd->parsed()) return cmd_predict(o, out);
    if (score_cmd->parsed()) return cmd_score(o, out);
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (encode_cmd->parsed()) return cmd_encode(o, out);
    if (decode_cmd->parsed()) return cmd_decode(o, out);
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    print_error(err, "internal_error", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace fpnseg
