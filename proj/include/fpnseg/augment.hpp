#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fpnseg/mask_codec.hpp"
#include "fpnseg/rng.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg {

struct AugmentConfig {
  bool geometric = true;
  bool photometric = true;
  double scale_min = 0.6;
  double scale_max = 1.4;
  double max_rotation_deg = 30.0;
  int64_t crop_size = 448;
  double brightness_min = -0.2;
  double brightness_max = 0.2;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double hue_min_deg = -18.0;
  double hue_max_deg = 18.0;
  double saturation_min = 0.8;
  double saturation_max = 1.2;
  double value_min = 0.8;
  double value_max = 1.2;

  void validate() const;
};

// An image in [0, 1] with shape [3, H, W] and its label map.
struct Sample {
  Tensor image;
  LabelMap labels;
};

struct GeometricParams {
  double scale = 1.0;
  double angle_deg = 0.0;
  // Top-left corner of the crop in the scaled frame; may be negative when
  // the frame is smaller than the crop.
  int64_t offset_y = 0;
  int64_t offset_x = 0;
};

struct PhotometricParams {
  double brightness = 0.0;
  double contrast = 1.0;
  double hue_deg = 0.0;
  double saturation = 1.0;
  double value = 1.0;
};

GeometricParams draw_geometric(const AugmentConfig& config, int64_t height,
                               int64_t width, RngStream& rng);

// Scales by params.scale and rotates by params.angle_deg about the frame
// centre, then crops crop x crop. Images are resampled bilinearly, labels by
// nearest neighbour; pixels from outside the source become 0 / unknown.
Sample apply_geometric(const Sample& sample, const GeometricParams& params,
                       int64_t crop);

Sample geometric_augment(const Sample& sample, const AugmentConfig& config,
                         RngStream& rng);

PhotometricParams draw_photometric(const AugmentConfig& config, RngStream& rng);
Tensor apply_photometric(const Tensor& image, const PhotometricParams& params);
Tensor photometric_augment(const Tensor& image, const AugmentConfig& config,
                           RngStream& rng);

// Hue in degrees [0, 360); saturation and value in [0, 1].
std::array<double, 3> rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

struct Batch {
  Tensor images;   // [B, 3, crop, crop]
  Tensor targets;  // [B, 7, crop, crop] one-hot
};

// Sample k of the batch draws from rng.derive("sample", k), so the batch is
// a pure function of (rng, indices).
Batch make_batch(const std::vector<Sample>& dataset,
                 std::span<const int64_t> indices, const AugmentConfig& config,
                 const RngStream& rng);

}  // namespace fpnseg
