#include "fpnseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fpnseg {

void AugmentConfig::validate() const {
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw ConfigError(std::string(what) + " range is empty");
  };
  range(scale_min, scale_max, "augment.scale");
  if (!(scale_min > 0.0)) throw ConfigError("augment.scale_min must be positive");
  if (!(max_rotation_deg >= 0.0))
    throw ConfigError("augment.max_rotation_deg must be non-negative");
  if (crop_size <= 0) throw ConfigError("augment.crop_size must be positive");
  range(brightness_min, brightness_max, "augment.brightness");
  range(contrast_min, contrast_max, "augment.contrast");
  range(hue_min_deg, hue_max_deg, "augment.hue");
  range(saturation_min, saturation_max, "augment.saturation");
  range(value_min, value_max, "augment.value");
}

namespace {

int64_t scaled_extent(int64_t n, double scale) {
  return std::max<int64_t>(1, std::llround(static_cast<double>(n) * scale));
}

int64_t draw_offset(int64_t frame, int64_t crop, RngStream& rng) {
  if (frame >= crop)
    return static_cast<int64_t>(rng.below(static_cast<uint64_t>(frame - crop + 1)));
  return -static_cast<int64_t>(rng.below(static_cast<uint64_t>(crop - frame + 1)));
}

}  // namespace

GeometricParams draw_geometric(const AugmentConfig& config, int64_t height,
                               int64_t width, RngStream& rng) {
  GeometricParams p;
  if (config.geometric) {
    p.scale = rng.uniform(config.scale_min, config.scale_max);
    p.angle_deg = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
  }
  p.offset_y = draw_offset(scaled_extent(height, p.scale), config.crop_size, rng);
  p.offset_x = draw_offset(scaled_extent(width, p.scale), config.crop_size, rng);
  return p;
}

Sample apply_geometric(const Sample& sample, const GeometricParams& params,
                       int64_t crop) {
  const Tensor& src = sample.image;
  if (src.rank() != 3 || src.dim(0) != 3)
    throw ShapeError("augment: expected [3,H,W] image, got " +
                     shape_string(src.shape()));
  const int64_t H = src.dim(1), W = src.dim(2);
  if (sample.labels.height != H || sample.labels.width != W)
    throw ShapeError("augment: image and label map differ in size");
  if (!(params.scale > 0.0)) throw ValueError("augment: scale must be positive");

  const int64_t Hs = scaled_extent(H, params.scale);
  const int64_t Ws = scaled_extent(W, params.scale);
  const double sy = static_cast<double>(Hs) / static_cast<double>(H);
  const double sx = static_cast<double>(Ws) / static_cast<double>(W);
  const double theta = params.angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double hy = static_cast<double>(Hs) / 2.0, hx = static_cast<double>(Ws) / 2.0;

  Sample out{Tensor({3, crop, crop}), LabelMap(crop, crop, kUnknownLabel)};
  const int64_t plane = H * W;
  for (int64_t oy = 0; oy < crop; ++oy) {
    for (int64_t ox = 0; ox < crop; ++ox) {
      // Frame coordinates relative to the frame centre, then inverse rotation.
      const double fy = static_cast<double>(oy + params.offset_y) + 0.5 - hy;
      const double fx = static_cast<double>(ox + params.offset_x) + 0.5 - hx;
      const double u = ct * fx + st * fy;
      const double v = -st * fx + ct * fy;
      const double y = (v + hy) / sy - 0.5;
      const double x = (u + hx) / sx - 0.5;

      const auto ny = static_cast<int64_t>(std::floor(y + 0.5));
      const auto nx = static_cast<int64_t>(std::floor(x + 0.5));
      if (ny >= 0 && ny < H && nx >= 0 && nx < W)
        out.labels.at(oy, ox) = sample.labels.at(ny, nx);

      const auto y0 = static_cast<int64_t>(std::floor(y));
      const auto x0 = static_cast<int64_t>(std::floor(x));
      const double wy1 = y - static_cast<double>(y0), wx1 = x - static_cast<double>(x0);
      const double wy[2] = {1.0 - wy1, wy1}, wx[2] = {1.0 - wx1, wx1};
      for (int64_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy) {
          const int64_t iy = y0 + dy;
          if (iy < 0 || iy >= H || wy[dy] == 0.0) continue;
          for (int dx = 0; dx < 2; ++dx) {
            const int64_t ix = x0 + dx;
            if (ix < 0 || ix >= W || wx[dx] == 0.0) continue;
            acc += wy[dy] * wx[dx] * static_cast<double>(src[c * plane + iy * W + ix]);
          }
        }
        out.image.at(c, oy, ox) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

Sample geometric_augment(const Sample& sample, const AugmentConfig& config,
                         RngStream& rng) {
  GeometricParams p =
      draw_geometric(config, sample.labels.height, sample.labels.width, rng);
  return apply_geometric(sample, p, config.crop_size);
}

PhotometricParams draw_photometric(const AugmentConfig& config, RngStream& rng) {
  PhotometricParams p;
  if (!config.photometric) return p;
  p.brightness = rng.uniform(config.brightness_min, config.brightness_max);
  p.contrast = rng.uniform(config.contrast_min, config.contrast_max);
  p.hue_deg = rng.uniform(config.hue_min_deg, config.hue_max_deg);
  p.saturation = rng.uniform(config.saturation_min, config.saturation_max);
  p.value = rng.uniform(config.value_min, config.value_max);
  return p;
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r)
      h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
      h = 60.0 * ((b - r) / d + 2.0);
    else
      h = 60.0 * ((r - g) / d + 4.0);
  }
  const double s = mx > 0.0 ? d / mx : 0.0;
  return {h, s, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {r + m, g + m, b + m};
}

Tensor apply_photometric(const Tensor& image, const PhotometricParams& p) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("photometric: expected [3,H,W] image, got " +
                     shape_string(image.shape()));
  const int64_t hw = image.dim(1) * image.dim(2);
  std::vector<double> px(image.vec().begin(), image.vec().end());
  double mean = 0.0;
  for (double& v : px) {
    v += p.brightness;
    mean += v;
  }
  mean /= static_cast<double>(px.size());
  for (double& v : px) v = std::clamp(mean + p.contrast * (v - mean), 0.0, 1.0);

  const bool neutral_hsv = p.hue_deg == 0.0 && p.saturation == 1.0 && p.value == 1.0;
  Tensor out(image.shape());
  for (int64_t i = 0; i < hw; ++i) {
    double r = px[static_cast<size_t>(i)], g = px[static_cast<size_t>(hw + i)],
           b = px[static_cast<size_t>(2 * hw + i)];
    if (!neutral_hsv) {
      auto [h, s, v] = rgb_to_hsv(r, g, b);
      h = std::fmod(h + p.hue_deg + 360.0, 360.0);
      s = std::clamp(s * p.saturation, 0.0, 1.0);
      v = std::clamp(v * p.value, 0.0, 1.0);
      auto rgb = hsv_to_rgb(h, s, v);
      r = rgb[0];
      g = rgb[1];
      b = rgb[2];
    }
    out[i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
    out[hw + i] = static_cast<float>(std::clamp(g, 0.0, 1.0));
    out[2 * hw + i] = static_cast<float>(std::clamp(b, 0.0, 1.0));
  }
  return out;
}

Tensor photometric_augment(const Tensor& image, const AugmentConfig& config,
                           RngStream& rng) {
  return apply_photometric(image, draw_photometric(config, rng));
}

Batch make_batch(const std::vector<Sample>& dataset,
                 std::span<const int64_t> indices, const AugmentConfig& config,
                 const RngStream& rng) {
  config.validate();
  if (indices.empty()) throw ValueError("make_batch: empty index list");
  const auto B = static_cast<int64_t>(indices.size());
  const int64_t crop = config.crop_size;
  Batch batch{Tensor({B, 3, crop, crop}), Tensor({B, kNumClasses, crop, crop})};
  const int64_t img_plane = 3 * crop * crop;
  const int64_t tgt_plane = kNumClasses * crop * crop;
  for (int64_t k = 0; k < B; ++k) {
    const int64_t idx = indices[static_cast<size_t>(k)];
    if (idx < 0 || idx >= static_cast<int64_t>(dataset.size()))
      throw ValueError("make_batch: sample index " + std::to_string(idx) +
                       " out of range for dataset of " +
                       std::to_string(dataset.size()));
    RngStream r = rng.derive("sample", static_cast<uint64_t>(k));
    Sample s = geometric_augment(dataset[static_cast<size_t>(idx)], config, r);
    Tensor img = config.photometric ? photometric_augment(s.image, config, r)
                                    : std::move(s.image);
    Tensor onehot = to_onehot(s.labels);
    std::copy(img.ptr(), img.ptr() + img_plane, batch.images.ptr() + k * img_plane);
    std::copy(onehot.ptr(), onehot.ptr() + tgt_plane,
              batch.targets.ptr() + k * tgt_plane);
  }
  return batch;
}

}  // namespace fpnseg
