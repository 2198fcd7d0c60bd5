#pragma once

#include <cstdint>

#include "fpnseg/model.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg {

struct PaddedImage {
  Tensor image;  // [C, H + top + bottom, W + left + right]
  int64_t height = 0, width = 0;
  int64_t top = 0, bottom = 0, left = 0, right = 0;
};

// Reflection-pads a [C,H,W] tensor so both sides become multiples of
// `multiple`. The padding is split evenly; an odd remainder goes to the
// bottom / right.
PaddedImage pad_to_multiple(const Tensor& image, int64_t multiple = 32);

// Removes the padding recorded in `pad` from a [C, H', W'] tensor.
Tensor crop_padding(const Tensor& padded, const PaddedImage& pad);

// Rotates the trailing two axes of a [C,H,W] tensor by k * 90 degrees
// counter-clockwise. k must be in 0..3.
Tensor rotate90(const Tensor& t, int k);

// Class probabilities [7,H,W] for a [3,H,W] image of any size, in eval mode.
Tensor predict(ModelState& model, const Tensor& image);

// Mean of the probabilities predicted for the four right-angle rotations of
// the image, each rotated back before averaging.
Tensor tta_predict(ModelState& model, const Tensor& image);

}  // namespace fpnseg
