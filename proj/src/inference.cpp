#include "fpnseg/inference.hpp"

#include <string>

#include "fpnseg/error.hpp"

namespace fpnseg {

namespace {

// Reflection without repeating the edge sample: -1 -> 1, n -> n - 2.
int64_t reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void require_chw(const Tensor& t, const char* who) {
  if (t.rank() != 3)
    throw ShapeError(std::string(who) + ": expected [C,H,W], got " +
                     shape_string(t.shape()));
}

}  // namespace

PaddedImage pad_to_multiple(const Tensor& image, int64_t multiple) {
  require_chw(image, "pad_to_multiple");
  if (multiple <= 0) throw ValueError("pad_to_multiple: multiple must be positive");
  PaddedImage out;
  const int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  out.height = H;
  out.width = W;
  const int64_t ph = (multiple - H % multiple) % multiple;
  const int64_t pw = (multiple - W % multiple) % multiple;
  out.top = ph / 2;
  out.bottom = ph - out.top;
  out.left = pw / 2;
  out.right = pw - out.left;
  const int64_t Ho = H + ph, Wo = W + pw;
  out.image = Tensor({C, Ho, Wo});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < Ho; ++y) {
      const int64_t sy = reflect(y - out.top, H);
      for (int64_t x = 0; x < Wo; ++x)
        out.image.at(c, y, x) = image.at(c, sy, reflect(x - out.left, W));
    }
  return out;
}

Tensor crop_padding(const Tensor& padded, const PaddedImage& pad) {
  require_chw(padded, "crop_padding");
  if (padded.dim(1) != pad.height + pad.top + pad.bottom ||
      padded.dim(2) != pad.width + pad.left + pad.right)
    throw ShapeError("crop_padding: tensor " + shape_string(padded.shape()) +
                     " does not match the recorded padding");
  const int64_t C = padded.dim(0);
  Tensor out({C, pad.height, pad.width});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < pad.height; ++y)
      for (int64_t x = 0; x < pad.width; ++x)
        out.at(c, y, x) = padded.at(c, y + pad.top, x + pad.left);
  return out;
}

Tensor rotate90(const Tensor& t, int k) {
  require_chw(t, "rotate90");
  if (k < 0 || k > 3)
    throw ValueError("rotate90: k must be in 0..3, got " + std::to_string(k));
  const int64_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
  if (k == 0) return t;
  const bool swap = k % 2 == 1;
  Tensor out({C, swap ? W : H, swap ? H : W});
  const int64_t Ho = out.dim(1), Wo = out.dim(2);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t x = 0; x < Wo; ++x) {
        // Source pixel of output (y, x) for a counter-clockwise rotation.
        int64_t sy = 0, sx = 0;
        switch (k) {
          case 1: sy = x; sx = W - 1 - y; break;
          case 2: sy = H - 1 - y; sx = W - 1 - x; break;
          default: sy = H - 1 - x; sx = y; break;
        }
        out.at(c, y, x) = t.at(c, sy, sx);
      }
  return out;
}

Tensor predict(ModelState& model, const Tensor& image) {
  require_chw(image, "predict");
  if (image.dim(0) != model.config.in_channels)
    throw ShapeError("predict: image has " + std::to_string(image.dim(0)) +
                     " channels, model expects " +
                     std::to_string(model.config.in_channels));
  PaddedImage pad = pad_to_multiple(image, 32);
  const int64_t C = pad.image.dim(0), H = pad.image.dim(1), W = pad.image.dim(2);
  RngStream unused(0);
  Tensor logits = forward(model, pad.image.reshaped({1, C, H, W}), Mode::Eval, unused);
  Tensor probs = kernels::softmax_channels(logits);
  return crop_padding(probs.reshaped({probs.dim(1), H, W}), pad);
}

Tensor tta_predict(ModelState& model, const Tensor& image) {
  require_chw(image, "tta_predict");
  Tensor acc;
  for (int k = 0; k < 4; ++k) {
    Tensor p = rotate90(predict(model, rotate90(image, k)), (4 - k) % 4);
    if (k == 0)
      acc = std::move(p);
    else
      acc += p;
  }
  acc *= 0.25f;
  return acc;
}

}  // namespace fpnseg
