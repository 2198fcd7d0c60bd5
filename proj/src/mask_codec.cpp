#include "fpnseg/mask_codec.hpp"

#include <string>

namespace fpnseg {

namespace {

// Indexed by (r >= 128) << 2 | (g >= 128) << 1 | (b >= 128).
constexpr std::array<uint8_t, 8> kBitsToLabel = [] {
  std::array<uint8_t, 8> t{};
  t.fill(kUnknownLabel);
  for (const auto& e : kClassTable) {
    int bits = (e.color.r ? 4 : 0) | (e.color.g ? 2 : 0) | (e.color.b ? 1 : 0);
    t[static_cast<size_t>(bits)] = static_cast<uint8_t>(e.index);
  }
  return t;
}();

}  // namespace

void LabelMap::validate() const {
  if (height <= 0 || width <= 0 ||
      labels.size() != static_cast<size_t>(height * width))
    throw ShapeError("label map dimensions do not match its storage");
  for (uint8_t v : labels)
    if (v >= kNumClasses)
      throw ValueError("label value " + std::to_string(v) + " out of range");
}

uint8_t decode_pixel(Rgb c) {
  int bits = (c.r >= 128 ? 4 : 0) | (c.g >= 128 ? 2 : 0) | (c.b >= 128 ? 1 : 0);
  return kBitsToLabel[static_cast<size_t>(bits)];
}

LabelMap decode_mask(const RgbImage& rgb) {
  LabelMap out(rgb.height, rgb.width);
  for (size_t i = 0; i < out.labels.size(); ++i)
    out.labels[i] = decode_pixel(
        {rgb.pixels[3 * i], rgb.pixels[3 * i + 1], rgb.pixels[3 * i + 2]});
  return out;
}

RgbImage encode_mask(const LabelMap& labels) {
  labels.validate();
  RgbImage out(labels.height, labels.width);
  for (size_t i = 0; i < labels.labels.size(); ++i) {
    const Rgb c = kClassTable[labels.labels[i]].color;
    out.pixels[3 * i] = c.r;
    out.pixels[3 * i + 1] = c.g;
    out.pixels[3 * i + 2] = c.b;
  }
  return out;
}

Tensor to_onehot(const LabelMap& labels) {
  labels.validate();
  const int64_t hw = labels.height * labels.width;
  Tensor out({kNumClasses, labels.height, labels.width});
  for (int64_t i = 0; i < hw; ++i)
    out[labels.labels[static_cast<size_t>(i)] * hw + i] = 1.0f;
  return out;
}

LabelMap argmax_labels(const Tensor& probs) {
  if (probs.rank() != 3 || probs.dim(0) != kNumClasses)
    throw ShapeError("argmax_labels: expected [7,H,W], got " +
                     shape_string(probs.shape()));
  const int64_t H = probs.dim(1), W = probs.dim(2), hw = H * W;
  LabelMap out(H, W);
  for (int64_t i = 0; i < hw; ++i) {
    int best = 0;
    float v = probs[i];
    for (int c = 1; c < kNumClasses; ++c)
      if (probs[c * hw + i] > v) {
        v = probs[c * hw + i];
        best = c;
      }
    out.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

Tensor onehot_batch(const std::vector<const LabelMap*>& maps) {
  if (maps.empty()) throw ShapeError("onehot_batch: empty batch");
  const int64_t H = maps.front()->height, W = maps.front()->width;
  const auto N = static_cast<int64_t>(maps.size());
  Tensor out({N, kNumClasses, H, W});
  const int64_t plane = kNumClasses * H * W;
  for (int64_t n = 0; n < N; ++n) {
    const LabelMap& m = *maps[static_cast<size_t>(n)];
    if (m.height != H || m.width != W)
      throw ShapeError("onehot_batch: label maps differ in size");
    Tensor one = to_onehot(m);
    std::copy(one.ptr(), one.ptr() + plane, out.ptr() + n * plane);
  }
  return out;
}

}  // namespace fpnseg
