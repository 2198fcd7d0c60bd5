#include "fpnseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fpnseg/error.hpp"
#include "fpnseg/inference.hpp"

namespace fpnseg {

void TrainConfig::validate() const {
  if (!(adam.lr0 > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(adam.decay >= 0.0)) throw ConfigError("train.decay must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (iterations < 0) throw ConfigError("train.iterations must be non-negative");
  if (validate_every < 0) throw ConfigError("train.validate_every must be non-negative");
  if (keep_best <= 0) throw ConfigError("train.keep_best must be positive");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("train.holdout_fraction must lie in (0, 1)");
  try {
    loss.validate();
  } catch (const ValueError& e) {
    throw ConfigError(e.what());
  }
}

Split split_holdout(int64_t n, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValueError("holdout fraction must lie in (0, 1)");
  const auto n_hold = static_cast<int64_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
  if (n_hold <= 0 || n_hold >= n)
    throw DataError("cannot split " + std::to_string(n) + " samples with holdout fraction " +
                    std::to_string(fraction) + ": one side would be empty");
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng = RngStream(seed).derive("split");
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)],
              perm[rng.below(static_cast<uint64_t>(i + 1))]);
  Split s;
  s.holdout.assign(perm.begin(), perm.begin() + n_hold);
  s.train.assign(perm.begin() + n_hold, perm.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<int64_t> batch_indices(const Split& split, const TrainConfig& config,
                                   int64_t iteration) {
  RngStream rng = RngStream(config.seed).derive("batch", static_cast<uint64_t>(iteration));
  std::vector<int64_t> out(static_cast<size_t>(config.batch_size));
  for (auto& i : out)
    i = split.train[rng.below(static_cast<uint64_t>(split.train.size()))];
  return out;
}

IoUReport evaluate(ModelState& model, const std::vector<Sample>& dataset,
                   std::span<const int64_t> indices, int64_t crop) {
  ConfusionCounts counts;
  for (int64_t idx : indices) {
    const Sample& s = dataset.at(static_cast<size_t>(idx));
    const int64_t H = s.labels.height, W = s.labels.width;
    Tensor probs;
    LabelMap truth;
    if (H > crop && W > crop) {
      GeometricParams centre;
      centre.offset_y = (H - crop) / 2;
      centre.offset_x = (W - crop) / 2;
      Sample c = apply_geometric(s, centre, crop);
      probs = predict(model, c.image);
      truth = std::move(c.labels);
    } else {
      probs = predict(model, s.image);
      truth = s.labels;
    }
    counts.add(argmax_labels(probs), truth);
  }
  return IoUReport::from_counts(counts);
}

namespace {

double rank_value(double mean_iou) { return std::isnan(mean_iou) ? -1.0 : mean_iou; }

void consider_checkpoint(TrainLog& log, ModelState& model, int64_t iteration,
                         double mean_iou, const TrainConfig& config,
                         const TrainHooks& hooks) {
  const double score = rank_value(mean_iou);
  auto& kept = log.kept;
  const bool full = static_cast<int64_t>(kept.size()) >= config.keep_best;
  // Ties keep the earlier checkpoint.
  if (full && !(score > rank_value(kept.back().mean_iou))) return;
  std::string path = hooks.save ? hooks.save(iteration, model) : std::string();
  KeptCheckpoint entry{iteration, mean_iou, path};
  auto pos = std::find_if(kept.begin(), kept.end(), [&](const KeptCheckpoint& k) {
    return score > rank_value(k.mean_iou);
  });
  kept.insert(pos, entry);
  if (static_cast<int64_t>(kept.size()) > config.keep_best) {
    if (hooks.remove && !kept.back().path.empty()) hooks.remove(kept.back().path);
    kept.pop_back();
  }
}

}  // namespace

TrainLog train(ModelState& model, const std::vector<Sample>& dataset,
               const TrainConfig& config, const AugmentConfig& augment,
               const TrainHooks& hooks) {
  config.validate();
  augment.validate();
  if (dataset.empty()) throw DataError("no samples to train on");
  const Split split =
      split_holdout(static_cast<int64_t>(dataset.size()), config.holdout_fraction, config.seed);
  const RngStream root(config.seed);
  TrainLog log;

  for (int64_t t = model.step; t < config.iterations; ++t) {
    const std::vector<int64_t> idx = batch_indices(split, config, t);
    Batch batch = make_batch(dataset, idx, augment, root.derive("augment", static_cast<uint64_t>(t)));

    ModelGraph<float> graph(model, Mode::Train, true);
    RngStream dropout = root.derive("dropout", static_cast<uint64_t>(t));
    Var<float> logits = graph.forward(Var<float>::leaf(std::move(batch.images)), dropout);
    Var<float> loss = combined_loss(logits, batch.targets, config.loss);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss " << value << " at iteration " << t;
      throw TrainingError(msg.str());
    }
    GradMap<float> grads = backward(loss);
    adam_step(model.params, grads, config.adam);
    model.step = t + 1;

    IterationRecord rec{t, value};
    log.iterations.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec);

    const bool last = t + 1 == config.iterations;
    if (config.validate_every > 0 && ((t + 1) % config.validate_every == 0 || last)) {
      ValidationRecord v{t, evaluate(model, dataset, split.holdout, augment.crop_size)};
      log.validations.push_back(v);
      if (hooks.on_validation) hooks.on_validation(v);
      consider_checkpoint(log, model, t, v.report.mean, config, hooks);
    }
    if (hooks.should_stop && hooks.should_stop(t, model)) break;
  }
  return log;
}

}  // namespace fpnseg
