#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fpnseg/tensor.hpp"

namespace fpnseg {

inline constexpr int kNumClasses = 7;
inline constexpr uint8_t kUnknownLabel = 6;

struct Rgb {
  uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

struct ClassEntry {
  int index;
  std::string_view name;
  Rgb color;
};

inline constexpr std::array<ClassEntry, kNumClasses> kClassTable{{
    {0, "urban", {0, 255, 255}},
    {1, "agriculture", {255, 255, 0}},
    {2, "rangeland", {255, 0, 255}},
    {3, "forest", {0, 255, 0}},
    {4, "water", {0, 0, 255}},
    {5, "barren", {255, 255, 255}},
    {6, "unknown", {0, 0, 0}},
}};

// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int64_t h, int64_t w)
      : height(h), width(w), pixels(static_cast<size_t>(h * w * 3), 0) {}

  Rgb at(int64_t y, int64_t x) const {
    const auto i = static_cast<size_t>((y * width + x) * 3);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int64_t y, int64_t x, Rgb c) {
    const auto i = static_cast<size_t>((y * width + x) * 3);
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }
  bool operator==(const RgbImage&) const = default;
};

struct LabelMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> labels;

  LabelMap() = default;
  LabelMap(int64_t h, int64_t w, uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<size_t>(h * w), fill) {}

  uint8_t& at(int64_t y, int64_t x) {
    return labels[static_cast<size_t>(y * width + x)];
  }
  uint8_t at(int64_t y, int64_t x) const {
    return labels[static_cast<size_t>(y * width + x)];
  }
  void validate() const;
  bool operator==(const LabelMap&) const = default;
};

// Binarizes each channel at >= 128, then looks the triple up in the class
// table. The one triple without a class, (255, 0, 0), maps to unknown.
uint8_t decode_pixel(Rgb c);
LabelMap decode_mask(const RgbImage& rgb);
RgbImage encode_mask(const LabelMap& labels);

// [7, H, W] one-hot planes.
Tensor to_onehot(const LabelMap& labels);
// Lowest class index wins ties.
LabelMap argmax_labels(const Tensor& probs);

// Stacks one-hot planes of several maps into [N, 7, H, W].
Tensor onehot_batch(const std::vector<const LabelMap*>& maps);

}  // namespace fpnseg
