#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fpnseg/augment.hpp"
#include "fpnseg/loss.hpp"
#include "fpnseg/model.hpp"
#include "fpnseg/optim.hpp"

namespace fpnseg {

struct TrainConfig {
  AdamConfig adam;
  LossWeights loss;
  int64_t batch_size = 8;
  int64_t iterations = 20000;
  // Validate (and consider keeping a checkpoint) every this many
  // iterations and after the last one; 0 disables validation.
  int64_t validate_every = 500;
  int64_t keep_best = 3;
  double holdout_fraction = 0.25;
  uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<int64_t> train;
  std::vector<int64_t> holdout;
};

// Seeded permutation of 0..n-1; the first round(n * fraction) indices (half
// rounded up) are held out. Both parts must be non-empty.
Split split_holdout(int64_t n, double fraction, uint64_t seed);

struct IterationRecord {
  int64_t iteration = 0;
  double loss = 0.0;
};

struct ValidationRecord {
  int64_t iteration = 0;
  IoUReport report;
};

struct KeptCheckpoint {
  int64_t iteration = 0;
  double mean_iou = 0.0;
  std::string path;
};

struct TrainLog {
  std::vector<IterationRecord> iterations;
  std::vector<ValidationRecord> validations;
  // Currently retained checkpoints, best first.
  std::vector<KeptCheckpoint> kept;
};

struct TrainHooks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const ValidationRecord&)> on_validation;
  // Persists the model after `iteration` and returns where it went.
  std::function<std::string(int64_t iteration, const ModelState&)> save;
  std::function<void(const std::string& path)> remove;
  // Called after every iteration; returning true ends training.
  std::function<bool(int64_t iteration, ModelState&)> should_stop;
};

// Runs iterations model.step .. config.iterations - 1. Iteration t draws its
// batch, augmentation and dropout from streams derived from (seed, t), so a
// resumed model continues the same sequence.
TrainLog train(ModelState& model, const std::vector<Sample>& dataset,
               const TrainConfig& config, const AugmentConfig& augment,
               const TrainHooks& hooks = {});

// Indices of the batch used at iteration t.
std::vector<int64_t> batch_indices(const Split& split, const TrainConfig& config,
                                   int64_t iteration);

// Global-count IoU over the given samples in eval mode. Samples larger than
// `crop` in both sides are centre-cropped to crop x crop.
IoUReport evaluate(ModelState& model, const std::vector<Sample>& dataset,
                   std::span<const int64_t> indices, int64_t crop);

}  // namespace fpnseg
