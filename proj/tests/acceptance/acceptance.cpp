// Acceptance suite. Prints one PASS/FAIL line per criterion; exits non-zero
// if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fpnseg/augment.hpp"
#include "fpnseg/checkpoint.hpp"
#include "fpnseg/dataset.hpp"
#include "fpnseg/inference.hpp"
#include "fpnseg/kernels.hpp"
#include "fpnseg/loss.hpp"
#include "fpnseg/model.hpp"
#include "fpnseg/optim.hpp"
#include "fpnseg/synth.hpp"
#include "fpnseg/trainer.hpp"
#include "support/grad_suite.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace fpnseg;
namespace ft = fpnseg::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    failures.push_back(what);
  }

  std::string summary() const {
    std::string out = detail.str();
    for (size_t i = 0; i < failures.size(); ++i)
      out += (i == 0 ? (out.empty() ? "failed: " : " | failed: ") : "; ") + failures[i];
    return out;
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradients

constexpr double kGradTolerance = 1e-3;
constexpr int kSeeds = 5;

ModelConfig gradient_model() {
  // Tiny encoder with a narrowed decoder; wider decoders push the
  // h = 1e-3 truncation error of batch-norm gammas past the tolerance.
  ModelConfig c = ModelConfig::tiny();
  c.lateral_channels = 16;
  c.pyramid_channels = 8;
  c.head_channels = 32;
  return c;
}

void gradient_suite(Outcome& o) {
  double worst = 0.0;
  int64_t checked = 0, skipped = 0;
  auto record = [&](uint64_t seed, const ft::GradCase& c) {
    worst = std::max(worst, c.result.max_rel_error);
    checked += c.result.checked;
    skipped += c.result.skipped;
    o.require(c.result.max_rel_error < kGradTolerance,
              c.name + " seed " + std::to_string(seed) + " rel " +
                  fmt(c.result.max_rel_error) + " at " + c.result.worst);
    o.require(c.result.checked > 0, c.name + " seed " + std::to_string(seed) +
                                        " checked no coordinates");
  };
  size_t ops = 0;
  for (uint64_t seed = 1; seed <= kSeeds; ++seed) {
    auto suite = ft::op_gradient_suite(seed);
    ops = suite.size();
    for (const auto& c : suite) record(seed, c);
    for (bool identity : {false, true}) {
      ft::ModelGradOptions mo;
      mo.config = gradient_model();
      mo.size = 64;
      mo.identity_activations = identity;
      ft::GradCase c = ft::model_gradient_check(seed, mo);
      if (identity) c.name += " [identity activations]";
      record(seed, c);
    }
  }
  o.detail << ops << " ops + model x2 variants, " << kSeeds << " seeds; max rel "
           << fmt(worst) << ", " << checked << " coords checked, " << skipped
           << " skipped at kinks";
}

// ---------------------------------------------------------------------------
// 2. Oracles

void oracle_suite(Outcome& o) {
  // The algorithm is checked in float64 on U(-1, 1) data; the float32 path
  // is checked with fan-in scaled weights, the range the model runs in.
  double conv_err = 0.0, conv_err32 = 0.0;
  struct C { Shape x, w; bool bias; int64_t s, p; };
  uint64_t seed = 1;
  auto conv_case = [&](const C& c, auto tag, double weight_scale) {
    using T = decltype(tag);
    const auto x = ft::random_tensor<T>(c.x, ++seed);
    const auto w = ft::random_tensor<T>(c.w, ++seed, -weight_scale, weight_scale);
    const auto b = ft::random_tensor<T>({c.w[0]}, ++seed);
    const auto got = kernels::conv2d<T>(x, w, c.bias ? &b : nullptr, c.s, c.p);
    const auto want = ft::conv2d_direct<T>(x, w, c.bias ? &b : nullptr, c.s, c.p);
    double err = got.shape() == want.shape() ? 0.0 : INFINITY;
    for (int64_t i = 0; i < got.numel() && std::isfinite(err); ++i)
      err = std::max(err, std::abs(static_cast<double>(got[i]) - static_cast<double>(want[i])));
    return err;
  };
  for (const C& c : {C{{2, 16, 13, 13}, {8, 16, 3, 3}, true, 1, 1},
                     C{{1, 8, 20, 20}, {6, 8, 7, 7}, false, 2, 3},
                     C{{2, 32, 9, 9}, {16, 32, 1, 1}, true, 2, 0},
                     C{{1, 12, 15, 11}, {5, 12, 3, 3}, false, 2, 1}}) {
    const double fan_in = static_cast<double>(c.w[1] * c.w[2] * c.w[3]);
    conv_err = std::max(conv_err, conv_case(c, double{}, 1.0));
    conv_err32 = std::max(conv_err32, conv_case(c, float{}, std::sqrt(6.0 / fan_in)));
  }
  o.require(conv_err <= 1e-5, "conv2d max abs error " + fmt(conv_err));
  o.require(conv_err32 <= 1e-5, "float conv2d max abs error " + fmt(conv_err32));

  bool pool_ok = true;
  for (auto [k, s, p] : {std::tuple{3, 2, 1}, std::tuple{2, 2, 0}, std::tuple{3, 1, 1}}) {
    Tensor x = ft::random_tensor({2, 3, 11, 10}, ++seed);
    pool_ok &= kernels::max_pool2d(x, k, s, p, nullptr) == ft::max_pool_scan(x, k, s, p);
  }
  o.require(pool_ok, "max-pool differs from the window scan");

  // Adam: every step of a 10-step trajectory.
  ParameterSet params;
  params.add("a", ft::random_tensor({4, 5}, 11));
  params.add("b", ft::random_tensor({7}, 12));
  AdamConfig adam;
  adam.lr0 = 1e-2;
  adam.decay = 1e-1;
  ft::AdamReference ref{adam.lr0, adam.decay, adam.beta1, adam.beta2, adam.epsilon, {}, {}, 0};
  std::vector<double> w;
  for (const auto& p : params)
    for (float v : p.value.data()) w.push_back(v);
  double adam_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    GradMap<float> g{{"a", ft::random_tensor({4, 5}, 100 + static_cast<uint64_t>(t))},
                     {"b", ft::random_tensor({7}, 200 + static_cast<uint64_t>(t), -1e-3, 1e-3)}};
    std::vector<double> flat;
    for (const char* n : {"a", "b"})
      for (float v : g[n].data()) flat.push_back(v);
    adam_step(params, g, adam);
    ref.step(w, flat);
    size_t k = 0;
    for (const auto& p : params)
      for (float v : p.value.data()) adam_err = std::max(adam_err, std::abs(v - w[k++]));
  }
  o.require(adam_err <= 1e-6, "Adam trajectory error " + fmt(adam_err));

  // Uniform prediction.
  std::vector<LabelMap> maps{ft::random_labels(8, 9, 21), ft::random_labels(8, 9, 22)};
  std::vector<const LabelMap*> ptrs{&maps[0], &maps[1]};
  const Tensor64 y = onehot_batch(ptrs).cast<double>();
  auto probs = softmax_channels(Var<double>::leaf(Tensor64({2, 7, 8, 9}, 0.0)));
  const double j = soft_jaccard(probs, y, LossWeights{}).value()[0];
  const double h = cross_entropy(probs, y, 1e-7).value()[0];
  o.require(std::abs(j - 1.0 / 7.0) <= 1e-6, "uniform J = " + fmt(j, "%.9f"));
  o.require(std::abs(h - std::log(7.0)) <= 1e-6, "uniform H = " + fmt(h, "%.9f"));

  // TTA against the explicit average of the four rotated branches.
  ModelState m = build_model(gradient_model(), RngStream(5));
  double tta_err = 0.0;
  for (auto [hh, ww] : {std::pair<int64_t, int64_t>{64, 64}, {70, 50}}) {
    const Tensor img = ft::random_tensor({3, hh, ww}, ++seed, 0.0, 1.0);
    const Tensor got = tta_predict(m, img);
    std::vector<Tensor> br;
    for (int k = 0; k < 4; ++k) br.push_back(rotate90(predict(m, rotate90(img, k)), (4 - k) % 4));
    for (int64_t i = 0; i < got.numel(); ++i) {
      const double want = (static_cast<double>(br[0][i]) + br[1][i] + br[2][i] + br[3][i]) / 4.0;
      tta_err = std::max(tta_err, std::abs(got[i] - want));
    }
  }
  o.require(tta_err <= 1e-6, "TTA error " + fmt(tta_err));
  o.detail << "conv " << fmt(conv_err) << " (f64), " << fmt(conv_err32) << " (f32)" << ", adam " << fmt(adam_err) << ", |J-1/7| "
           << fmt(std::abs(j - 1.0 / 7.0)) << ", |H-ln7| " << fmt(std::abs(h - std::log(7.0)))
           << ", tta " << fmt(tta_err);
}

// ---------------------------------------------------------------------------
// 3. Codec

void codec_suite(Outcome& o) {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const LabelMap l = ft::random_labels(17 + static_cast<int64_t>(seed), 23, seed);
    o.require(decode_mask(encode_mask(l)) == l, "round trip seed " + std::to_string(seed));
  }
  o.require(decode_pixel({0, 255, 255}) == 0, "(0,255,255)");
  o.require(decode_pixel({130, 126, 255}) == 2, "(130,126,255)");
  o.require(decode_pixel({255, 0, 0}) == kUnknownLabel, "(255,0,0)");
  o.detail << "20 random maps round-trip; 3 threshold examples";
}

// ---------------------------------------------------------------------------
// 4. Shapes

void shape_suite(Outcome& o) {
  ModelState m = build_model(ModelConfig::resnet50(), RngStream(0));
  const Tensor x = ft::random_tensor({1, 3, 448, 448}, 1, 0.0, 1.0);
  NoGradGuard guard;
  ModelGraph<float> g(m, Mode::Eval, false);
  RngStream rng(0);
  const PyramidFeatures<float> p = g.topdown(g.encoder(Var<float>::leaf(x)));
  const Var<float> logits = g.head(p, rng);
  const int64_t sides[4] = {112, 56, 28, 14};
  for (int l = 0; l < 4; ++l)
    o.require(p.p[static_cast<size_t>(l)].shape() == Shape{1, 128, sides[l], sides[l]},
              "P" + std::to_string(l + 2) + " " + shape_string(p.p[static_cast<size_t>(l)].shape()));
  o.require(g.head_concat().shape() == Shape{1, 512, 112, 112},
            "concat " + shape_string(g.head_concat().shape()));
  o.require(logits.shape() == Shape{1, 7, 448, 448}, "logits " + shape_string(logits.shape()));

  const PaddedImage big = pad_to_multiple(Tensor({1, 2448, 2448}), 32);
  o.require(big.image.shape() == Shape{1, 2464, 2464} && big.top == 8 && big.bottom == 8 &&
                big.left == 8 && big.right == 8,
            "2448 padding");
  const PaddedImage odd = pad_to_multiple(Tensor({1, 450, 450}), 32);
  o.require(odd.image.shape() == Shape{1, 480, 480} && odd.top == 15 && odd.bottom == 15,
            "450 padding");
  o.detail << "P2..P5 " << shape_string(p.p[0].shape()) << ".." << shape_string(p.p[3].shape())
           << ", concat " << shape_string(g.head_concat().shape()) << ", logits "
           << shape_string(logits.shape());
}

// ---------------------------------------------------------------------------
// 5-7. Training

constexpr int64_t kSynthSize = 96;
constexpr int kSynthCount = 8;

std::vector<Sample> synthetic_dataset() {
  const RngStream root(0);
  std::vector<Sample> out;
  for (int k = 0; k < kSynthCount; ++k) {
    SynthPair p = synth_pair(kSynthSize, root.derive("synth", static_cast<uint64_t>(k)));
    out.push_back({image_to_tensor(p.image), p.labels});
  }
  return out;
}

struct Setup {
  ModelConfig model = ModelConfig::tiny();
  TrainConfig train;
  AugmentConfig augment;
};

Setup learning_setup(uint64_t seed) {
  Setup s;
  s.model.dropout_p = 0.0;
  s.train.batch_size = 4;
  s.train.iterations = 500;
  s.train.adam.lr0 = 1e-4;
  s.train.adam.decay = 1e-4;
  s.train.loss.alpha = 1.0;
  s.train.loss.beta = 0.5;
  s.train.validate_every = 0;
  s.train.seed = seed;
  s.augment.geometric = false;
  s.augment.photometric = false;
  s.augment.crop_size = kSynthSize;
  return s;
}

ModelState init_model(const Setup& s) {
  return build_model(s.model, RngStream(s.train.seed).derive("model"));
}

struct TrainingFit {
  double soft_jaccard = 0.0;
  double mean_iou = 0.0;
};

// Eval-mode soft Jaccard and argmax mean IoU over the given samples.
TrainingFit measure_fit(ModelState& m, const std::vector<Sample>& data,
                        const std::vector<int64_t>& indices, const LossWeights& w) {
  TrainingFit f;
  ConfusionCounts counts;
  for (int64_t i : indices) {
    const Sample& s = data[static_cast<size_t>(i)];
    RngStream unused(0);
    const Tensor x = s.image.reshaped({1, 3, s.labels.height, s.labels.width});
    const Tensor probs = kernels::softmax_channels(forward(m, x, Mode::Eval, unused));
    const Tensor y = to_onehot(s.labels).reshaped(probs.shape());
    f.soft_jaccard += soft_jaccard_value(probs, y, w);
    counts.add(argmax_labels(probs.reshaped({kNumClasses, s.labels.height, s.labels.width})),
               s.labels);
  }
  f.soft_jaccard /= static_cast<double>(indices.size());
  f.mean_iou = IoUReport::from_counts(counts).mean;
  return f;
}

void learning_experiment(Outcome& o) {
  const auto data = synthetic_dataset();
  constexpr int kRequired = 4;
  constexpr int64_t kCheckEvery = 25;
  int passed = 0, tried = 0;
  for (uint64_t seed = 1; seed <= kSeeds && passed < kRequired; ++seed) {
    if (passed + (kSeeds - tried) < kRequired) break;
    ++tried;
    const Setup s = learning_setup(seed);
    const Split split = split_holdout(kSynthCount, s.train.holdout_fraction, seed);
    ModelState m = init_model(s);
    int64_t reached = -1;
    TrainingFit last;
    TrainHooks hooks;
    hooks.should_stop = [&](int64_t t, ModelState& model) {
      if ((t + 1) % kCheckEvery != 0 && t + 1 != s.train.iterations) return false;
      last = measure_fit(model, data, split.train, s.train.loss);
      if (last.soft_jaccard > 0.9 && last.mean_iou > 0.9) reached = t + 1;
      return reached > 0;
    };
    train(m, data, s.train, s.augment, hooks);
    const bool ok = reached > 0;
    passed += ok;
    std::cout << "  seed " << seed << ": " << (ok ? "reached" : "missed") << " at "
              << (ok ? reached : s.train.iterations) << " iterations, soft-Jaccard "
              << fmt(last.soft_jaccard, "%.4f") << ", mean IoU " << fmt(last.mean_iou, "%.4f")
              << "\n"
              << std::flush;
  }
  o.require(passed >= kRequired, std::to_string(passed) + " of " + std::to_string(tried) +
                                     " seeds reached the targets");
  o.detail << passed << " of " << tried << " seeds reached soft-Jaccard > 0.9 and mean IoU > 0.9"
           << " within 500 iterations";
}

std::vector<double> losses(const TrainLog& log) {
  std::vector<double> out;
  for (const auto& r : log.iterations) out.push_back(r.loss);
  return out;
}

void determinism(Outcome& o) {
  const auto data = synthetic_dataset();
  // Full pipeline: augmentation and dropout streams are exercised.
  Setup s;
  s.train.batch_size = 4;
  s.train.iterations = 30;
  s.train.validate_every = 0;
  s.train.seed = 11;
  s.augment.crop_size = 64;

  ModelState a = init_model(s);
  const auto la = losses(train(a, data, s.train, s.augment));
  ModelState b = init_model(s);
  const auto lb = losses(train(b, data, s.train, s.augment));
  o.require(la == lb, "two identical runs logged different losses");
  bool params_equal = true;
  for (const auto& p : a.params) params_equal &= p.value == b.params.get(p.name).value;
  o.require(params_equal, "two identical runs ended with different parameters");

  ft::TempDir dir;
  const int64_t split_at = 10;
  ModelState c = init_model(s);
  TrainConfig head_cfg = s.train;
  head_cfg.iterations = split_at;
  const auto lc = losses(train(c, data, head_cfg, s.augment));
  save_checkpoint(dir.path() / "mid.ckpt", c);
  ModelState d = load_checkpoint(dir.path() / "mid.ckpt").model;
  const auto ld = losses(train(d, data, s.train, s.augment));
  std::vector<double> stitched = lc;
  stitched.insert(stitched.end(), ld.begin(), ld.end());
  o.require(ld.size() == 20, "resumed run logged " + std::to_string(ld.size()) + " iterations");
  o.require(stitched == la, "resumed losses differ from the unbroken run");
  bool resumed_equal = d.step == a.step;
  for (const auto& p : a.params) {
    resumed_equal &= p.value == d.params.get(p.name).value;
    resumed_equal &= p.adam_m == d.params.get(p.name).adam_m && p.adam_v == d.params.get(p.name).adam_v;
  }
  for (const auto& [name, t] : a.buffers) resumed_equal &= t == d.buffers.at(name);
  o.require(resumed_equal, "resumed state differs from the unbroken run");
  o.detail << la.size() << " iterations twice; resume after " << split_at << " matches "
           << ld.size() << " further losses bit-for-bit";
}

void initial_loss(Outcome& o) {
  const auto data = synthetic_dataset();
  const double target = std::log(7.0) + 0.5 * (6.0 / 7.0);
  o.detail << "iteration-0 loss";
  for (uint64_t seed = 1; seed <= kSeeds; ++seed) {
    Setup s = learning_setup(seed);
    s.train.iterations = 1;
    ModelState m = init_model(s);
    const double l = train(m, data, s.train, s.augment).iterations.at(0).loss;
    o.require(std::abs(l - target) <= 0.3, "seed " + std::to_string(seed) + " loss " + fmt(l));
    o.detail << (seed == 1 ? " " : ", ") << fmt(l, "%.4f");
  }
  o.detail << " vs " << fmt(target, "%.4f") << " +- 0.3";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fpnseg acceptance suite"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Run only these criteria (1-7)")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "gradient suite", 120, gradient_suite},
      {2, "oracle suite", 60, oracle_suite},
      {3, "codec suite", 10, codec_suite},
      {4, "shape suite", 60, shape_suite},
      {5, "learning experiment", 600, learning_experiment},
      {6, "determinism and resume", 600, determinism},
      {7, "initial loss", 600, initial_loss},
  };
  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.budget_s, "took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s");
    all_pass &= o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name
              << ", " << fmt(secs, "%.1f") << " s): " << o.summary() << "\n"
              << std::flush;
  }
  return all_pass ? 0 : 1;
}
