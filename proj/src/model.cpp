#include "fpnseg/model.hpp"

#include <cmath>

namespace fpnseg {

ModelConfig ModelConfig::resnet50() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stem_channels = 16;
  c.stage_widths = {16, 32, 64, 128};
  c.stage_blocks = {1, 1, 1, 1};
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int64_t v, const char* what) {
    if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(in_channels, "model.in_channels");
  positive(stem_channels, "model.stem_channels");
  positive(bottleneck_expansion, "model.bottleneck_expansion");
  for (int64_t w : stage_widths) {
    positive(w, "model.stage_widths");
    if (w % bottleneck_expansion != 0)
      throw ConfigError("model.stage_widths must be multiples of the bottleneck expansion");
  }
  for (int64_t b : stage_blocks) positive(b, "model.stage_blocks");
  positive(lateral_channels, "model.lateral_channels");
  positive(pyramid_channels, "model.pyramid_channels");
  positive(head_channels, "model.head_channels");
  positive(num_classes, "model.num_classes");
  if (head_channels != 4 * pyramid_channels)
    throw ConfigError("model.head_channels must equal 4 * model.pyramid_channels");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("model.dropout_p must lie in [0, 1)");
  if (!(bn_epsilon > 0.0)) throw ConfigError("model.bn_epsilon must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0))
    throw ConfigError("model.bn_momentum must lie in [0, 1]");
  if (!(classifier_init_std >= 0.0))
    throw ConfigError("model.classifier_init_std must be non-negative");
}

namespace {

Tensor he_normal(const Shape& shape, const RngStream& root,
                 const std::string& name, double stddev) {
  RngStream rng = root.derive("init/" + name);
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

struct Builder {
  ModelState& m;
  const RngStream& rng;

  void conv(const std::string& prefix, int64_t cin, int64_t cout, int64_t k,
            bool bias) {
    const double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    m.params.add(prefix + ".weight",
                 he_normal({cout, cin, k, k}, rng, prefix + ".weight", std));
    if (bias) m.params.add(prefix + ".bias", Tensor({cout}));
  }
  void bn(const std::string& prefix, int64_t c) {
    m.params.add(prefix + ".gamma", Tensor::full({c}, 1.0f));
    m.params.add(prefix + ".beta", Tensor({c}));
    m.buffers[prefix + ".running_mean"] = Tensor({c});
    m.buffers[prefix + ".running_var"] = Tensor::full({c}, 1.0f);
  }
};

std::string block_prefix(int stage, int64_t block) {
  return "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
}

bool needs_projection(int64_t cin, int64_t cout, int64_t stride) {
  return cin != cout || stride != 1;
}

}  // namespace

ModelState build_model(const ModelConfig& config, const RngStream& rng) {
  config.validate();
  ModelState m;
  m.config = config;
  Builder b{m, rng};

  b.conv("stem.conv", config.in_channels, config.stem_channels, 7, false);
  b.bn("stem.bn", config.stem_channels);

  int64_t cin = config.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const int64_t width = config.stage_widths[static_cast<size_t>(s)];
    const int64_t mid = width / config.bottleneck_expansion;
    for (int64_t k = 0; k < config.stage_blocks[static_cast<size_t>(s)]; ++k) {
      const std::string p = block_prefix(s, k);
      const int64_t stride = (s > 0 && k == 0) ? 2 : 1;
      b.conv(p + ".conv1", cin, mid, 1, false);
      b.bn(p + ".bn1", mid);
      b.conv(p + ".conv2", mid, mid, 3, false);
      b.bn(p + ".bn2", mid);
      b.conv(p + ".conv3", mid, width, 1, false);
      b.bn(p + ".bn3", width);
      if (needs_projection(cin, width, stride)) {
        b.conv(p + ".downsample.conv", cin, width, 1, false);
        b.bn(p + ".downsample.bn", width);
      }
      cin = width;
    }
  }

  for (int level = 2; level <= 5; ++level) {
    const std::string l = std::to_string(level);
    b.conv("fpn.lateral" + l, config.stage_widths[static_cast<size_t>(level - 2)],
           config.lateral_channels, 1, true);
    b.conv("fpn.smooth" + l + ".conv1", config.lateral_channels,
           config.pyramid_channels, 3, true);
    b.conv("fpn.smooth" + l + ".conv2", config.pyramid_channels,
           config.pyramid_channels, 3, true);
  }

  b.conv("head.conv", 4 * config.pyramid_channels, config.head_channels, 3,
         false);
  b.bn("head.bn", config.head_channels);
  m.params.add("head.classifier.weight",
               he_normal({config.num_classes, config.head_channels, 1, 1}, rng,
                         "head.classifier.weight",
                         config.classifier_init_std));
  m.params.add("head.classifier.bias", Tensor({config.num_classes}));
  return m;
}

template <typename T>
ModelGraph<T>::ModelGraph(ModelState& model, Mode mode,
                          bool track_parameter_grads, ForwardOptions options)
    : model_(model), mode_(mode), track_(track_parameter_grads),
      options_(options) {
  for (const auto& [name, t] : model_.buffers)
    buffers_.emplace(name, t.template cast<T>());
}

template <typename T>
Var<T> ModelGraph<T>::param(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  const Parameter& p = model_.params.get(name);
  Var<T> v = Var<T>::leaf(p.value.template cast<T>(), track_, name);
  leaves_.emplace(name, v);
  return v;
}

template <typename T>
void ModelGraph<T>::bind_parameter(const std::string& name, Var<T> leaf) {
  const Parameter& p = model_.params.get(name);
  if (leaf.shape() != p.value.shape())
    throw ShapeError("bind_parameter: " + name + " expects shape " +
                     shape_string(p.value.shape()) + ", got " +
                     shape_string(leaf.shape()));
  if (!leaves_.emplace(name, std::move(leaf)).second)
    throw ValueError("bind_parameter: " + name + " is already bound");
}

template <typename T>
Var<T> ModelGraph<T>::conv(const Var<T>& x, const std::string& prefix,
                           int64_t stride, int64_t padding, bool bias) {
  return fpnseg::conv2d(x, param(prefix + ".weight"),
                        bias ? param(prefix + ".bias") : Var<T>(), stride,
                        padding);
}

template <typename T>
Var<T> ModelGraph<T>::bn(const Var<T>& x, const std::string& prefix) {
  return fpnseg::batch_norm2d(x, param(prefix + ".gamma"),
                              param(prefix + ".beta"),
                              buffers_.at(prefix + ".running_mean"),
                              buffers_.at(prefix + ".running_var"), mode_,
                              model_.config.bn_momentum,
                              model_.config.bn_epsilon);
}

template <typename T>
Var<T> ModelGraph<T>::act(const Var<T>& x) {
  return options_.identity_activations ? x : fpnseg::relu(x);
}

template <typename T>
Var<T> ModelGraph<T>::bottleneck(const Var<T>& x, const std::string& p,
                                 int64_t stride, bool project) {
  Var<T> y = act(bn(conv(x, p + ".conv1", 1, 0, false), p + ".bn1"));
  y = act(bn(conv(y, p + ".conv2", stride, 1, false), p + ".bn2"));
  y = bn(conv(y, p + ".conv3", 1, 0, false), p + ".bn3");
  Var<T> shortcut =
      project ? bn(conv(x, p + ".downsample.conv", stride, 0, false),
                   p + ".downsample.bn")
              : x;
  return act(fpnseg::add(y, shortcut));
}

template <typename T>
EncoderFeatures<T> ModelGraph<T>::encoder(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != model_.config.in_channels)
    throw ShapeError("encoder: expected [N," +
                     std::to_string(model_.config.in_channels) +
                     ",H,W] input, got " + shape_string(s));
  if (s[2] % 32 != 0 || s[3] % 32 != 0)
    throw ShapeError("encoder: input height and width must be divisible by 32, got " +
                     shape_string(s));
  EncoderFeatures<T> out;
  out.c1 = act(bn(conv(x, "stem.conv", 2, 3, false), "stem.bn"));
  Var<T> y = fpnseg::max_pool2d(out.c1, 3, 2, 1);
  int64_t cin = model_.config.stem_channels;
  std::array<Var<T>*, 4> stages{&out.c2, &out.c3, &out.c4, &out.c5};
  for (int st = 0; st < 4; ++st) {
    const int64_t width = model_.config.stage_widths[static_cast<size_t>(st)];
    for (int64_t k = 0; k < model_.config.stage_blocks[static_cast<size_t>(st)];
         ++k) {
      const int64_t stride = (st > 0 && k == 0) ? 2 : 1;
      y = bottleneck(y, block_prefix(st, k), stride,
                     needs_projection(cin, width, stride));
      cin = width;
    }
    *stages[static_cast<size_t>(st)] = y;
  }
  return out;
}

template <typename T>
PyramidFeatures<T> ModelGraph<T>::topdown(const EncoderFeatures<T>& c) {
  const std::array<const Var<T>*, 4> cs{&c.c2, &c.c3, &c.c4, &c.c5};
  PyramidFeatures<T> out;
  for (int level = 5; level >= 2; --level) {
    const auto i = static_cast<size_t>(level - 2);
    const std::string l = std::to_string(level);
    Var<T> lateral = conv(*cs[i], "fpn.lateral" + l, 1, 0, true);
    out.m[i] = level == 5 ? lateral
                          : fpnseg::add(fpnseg::upsample_nearest(out.m[i + 1], 2),
                                        lateral);
    Var<T> y = act(conv(out.m[i], "fpn.smooth" + l + ".conv1", 1, 1, true));
    out.p[i] = conv(y, "fpn.smooth" + l + ".conv2", 1, 1, true);
  }
  return out;
}

template <typename T>
Var<T> ModelGraph<T>::head(const PyramidFeatures<T>& p, RngStream& rng) {
  std::vector<Var<T>> parts{p.p[0], fpnseg::upsample_nearest(p.p[1], 2),
                            fpnseg::upsample_nearest(p.p[2], 4),
                            fpnseg::upsample_nearest(p.p[3], 8)};
  concat_ = fpnseg::concat_channels(parts);
  Var<T> y = act(bn(conv(concat_, "head.conv", 1, 1, false), "head.bn"));
  y = fpnseg::spatial_dropout(y, model_.config.dropout_p, mode_, rng);
  coarse_ = conv(y, "head.classifier", 1, 0, true);
  const Shape& s = coarse_.shape();
  return fpnseg::upsample_bilinear(coarse_, 4 * s[2], 4 * s[3]);
}

template <typename T>
Var<T> ModelGraph<T>::forward(const Var<T>& x, RngStream& rng) {
  Var<T> logits = head(topdown(encoder(x)), rng);
  commit();
  return logits;
}

template <typename T>
void ModelGraph<T>::commit() {
  if (mode_ != Mode::Train) return;
  for (const auto& [name, t] : buffers_)
    model_.buffers.at(name) = t.template cast<float>();
}

template class ModelGraph<float>;
template class ModelGraph<double>;

EncoderFeatures<float> encoder_forward(ModelState& model, const Tensor& x,
                                       Mode mode) {
  NoGradGuard guard;
  ModelGraph<float> g(model, mode, false);
  auto out = g.encoder(Var<float>::leaf(x));
  g.commit();
  return out;
}

PyramidFeatures<float> fpn_topdown(ModelState& model,
                                   const EncoderFeatures<float>& c) {
  NoGradGuard guard;
  ModelGraph<float> g(model, Mode::Eval, false);
  return g.topdown(c);
}

Tensor head_forward(ModelState& model, const PyramidFeatures<float>& p,
                    Mode mode, RngStream& rng) {
  NoGradGuard guard;
  ModelGraph<float> g(model, mode, false);
  auto out = g.head(p, rng);
  g.commit();
  return out.value();
}

Tensor forward(ModelState& model, const Tensor& x, Mode mode, RngStream& rng) {
  NoGradGuard guard;
  ModelGraph<float> g(model, mode, false);
  return g.forward(Var<float>::leaf(x), rng).value();
}

}  // namespace fpnseg
