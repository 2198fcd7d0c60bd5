#pragma once

// Feature-pyramid segmentation network: bottleneck-residual encoder
// (C2..C5), top-down pathway with lateral 1x1 projections (M2..M5), two 3x3
// convolutions per level (P2..P5), and a concatenation head that predicts
// per-class logits at input resolution.

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "fpnseg/autograd.hpp"
#include "fpnseg/optim.hpp"
#include "fpnseg/rng.hpp"

namespace fpnseg {

struct ModelConfig {
  int64_t in_channels = 3;
  int64_t stem_channels = 64;
  std::array<int64_t, 4> stage_widths{256, 512, 1024, 2048};
  std::array<int64_t, 4> stage_blocks{3, 4, 6, 3};
  int64_t bottleneck_expansion = 4;
  int64_t lateral_channels = 256;
  int64_t pyramid_channels = 128;
  int64_t head_channels = 512;
  int64_t num_classes = 7;
  double dropout_p = 0.5;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  // The classifier starts near zero so the initial prediction is close to
  // uniform over classes.
  double classifier_init_std = 0.01;

  // ResNet50 encoder widths and depths with the default decoder.
  static ModelConfig resnet50();
  // Encoder widths (16, 32, 64, 128) with one block per stage and a 16-channel
  // stem; the decoder keeps the default widths.
  static ModelConfig tiny();

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ModelState {
  ModelConfig config;
  ParameterSet params;
  // Batch-norm running statistics, keyed "<layer>.running_mean|running_var".
  std::map<std::string, Tensor> buffers;
  // Number of optimizer steps applied.
  int64_t step = 0;
};

ModelState build_model(const ModelConfig& config, const RngStream& rng);

template <typename T>
struct EncoderFeatures {
  Var<T> c1, c2, c3, c4, c5;
};

template <typename T>
struct PyramidFeatures {
  std::array<Var<T>, 4> m;  // M2..M5
  std::array<Var<T>, 4> p;  // P2..P5
};

// Hooks used only by test harnesses.
struct ForwardOptions {
  // Replace every ReLU by the identity.
  bool identity_activations = false;
};

// One forward pass bound to a model. Parameters become leaves of the
// recorded graph (named as in the model); train-mode batch-norm statistics
// are written back to the model by forward()/commit().
template <typename T>
class ModelGraph {
 public:
  ModelGraph(ModelState& model, Mode mode, bool track_parameter_grads,
             ForwardOptions options = {});

  EncoderFeatures<T> encoder(const Var<T>& x);
  PyramidFeatures<T> topdown(const EncoderFeatures<T>& c);
  Var<T> head(const PyramidFeatures<T>& p, RngStream& rng);
  Var<T> forward(const Var<T>& x, RngStream& rng);

  // Writes updated running statistics back to the model (train mode only).
  void commit();

  // Uses `leaf` in place of the model's value for the named parameter in
  // this graph. Must be called before the parameter is first used.
  void bind_parameter(const std::string& name, Var<T> leaf);

  // The logits of the most recent head() before upsampling.
  const Var<T>& coarse_logits() const { return coarse_; }
  const Var<T>& head_concat() const { return concat_; }

 private:
  Var<T> param(const std::string& name);
  Var<T> conv(const Var<T>& x, const std::string& prefix, int64_t stride,
              int64_t padding, bool bias);
  Var<T> bn(const Var<T>& x, const std::string& prefix);
  Var<T> act(const Var<T>& x);
  Var<T> bottleneck(const Var<T>& x, const std::string& prefix,
                    int64_t stride, bool project);

  ModelState& model_;
  Mode mode_;
  bool track_;
  ForwardOptions options_;
  std::map<std::string, Var<T>> leaves_;
  std::map<std::string, BasicTensor<T>> buffers_;
  Var<T> coarse_, concat_;
};

// Convenience entry points running a float pass without gradient tracking
// of parameters.
EncoderFeatures<float> encoder_forward(ModelState& model, const Tensor& x,
                                       Mode mode);
PyramidFeatures<float> fpn_topdown(ModelState& model,
                                   const EncoderFeatures<float>& c);
Tensor head_forward(ModelState& model, const PyramidFeatures<float>& p,
                    Mode mode, RngStream& rng);
Tensor forward(ModelState& model, const Tensor& x, Mode mode, RngStream& rng);

}  // namespace fpnseg
