#include <doctest.h>

#include <cmath>

#include "fpnseg/augment.hpp"
#include "fpnseg/error.hpp"
#include "fpnseg/inference.hpp"
#include "support/oracles.hpp"

using namespace fpnseg;
using fpnseg::testing::random_labels;
using fpnseg::testing::random_tensor;

namespace {

Sample random_sample(int64_t h, int64_t w, uint64_t seed) {
  return {random_tensor({3, h, w}, seed, 0.0, 1.0), random_labels(h, w, seed + 1)};
}

}  // namespace

TEST_CASE("identity geometric parameters copy the sample") {
  Sample s = random_sample(16, 16, 1);
  Sample out = apply_geometric(s, GeometricParams{}, 16);
  CHECK(out.labels == s.labels);
  for (int64_t i = 0; i < s.image.numel(); ++i) CHECK(out.image[i] == doctest::Approx(s.image[i]));
}

TEST_CASE("integer crops select a window") {
  Sample s = random_sample(20, 24, 2);
  GeometricParams p;
  p.offset_y = 3;
  p.offset_x = 5;
  Sample out = apply_geometric(s, p, 8);
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x) {
      CHECK(out.labels.at(y, x) == s.labels.at(y + 3, x + 5));
      CHECK(out.image.at(1, y, x) == doctest::Approx(s.image.at(1, y + 3, x + 5)));
    }
}

TEST_CASE("scaling by 2 repeats labels in 2x2 blocks") {
  Sample s = random_sample(4, 4, 3);
  GeometricParams p;
  p.scale = 2.0;
  Sample out = apply_geometric(s, p, 8);
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x) CHECK(out.labels.at(y, x) == s.labels.at(y / 2, x / 2));
}

TEST_CASE("a quarter-turn rotation permutes labels exactly") {
  Sample s = random_sample(6, 6, 4);
  GeometricParams p;
  p.angle_deg = 90.0;
  Sample out = apply_geometric(s, p, 6);
  for (int64_t y = 0; y < 6; ++y)
    for (int64_t x = 0; x < 6; ++x) CHECK(out.labels.at(y, x) == s.labels.at(5 - x, y));
}

TEST_CASE("pixels from outside the source become unknown and black") {
  Sample s{Tensor({3, 32, 32}, 1.0f), LabelMap(32, 32, 2)};
  GeometricParams p;
  p.angle_deg = 45.0;
  Sample out = apply_geometric(s, p, 32);
  CHECK(out.labels.at(0, 0) == kUnknownLabel);
  CHECK(out.image.at(0, 0, 0) == 0.0f);
  CHECK(out.labels.at(16, 16) == 2);
  CHECK(out.image.at(2, 16, 16) == doctest::Approx(1.0f));

  GeometricParams pad;
  pad.offset_y = -4;
  pad.offset_x = -4;
  Sample padded = apply_geometric(s, pad, 40);
  CHECK(padded.labels.at(0, 0) == kUnknownLabel);
  CHECK(padded.labels.at(39, 39) == kUnknownLabel);
  CHECK(padded.labels.at(4, 4) == 2);
  CHECK(padded.labels.at(35, 35) == 2);
}

TEST_CASE("drawn geometric parameters respect the configured ranges") {
  AugmentConfig cfg;
  cfg.crop_size = 64;
  RngStream rng(5);
  for (int i = 0; i < 200; ++i) {
    GeometricParams p = draw_geometric(cfg, 100, 80, rng);
    CHECK(p.scale >= 0.6);
    CHECK(p.scale <= 1.4);
    CHECK(std::abs(p.angle_deg) <= 30.0);
    const auto hs = std::llround(100 * p.scale), ws = std::llround(80 * p.scale);
    if (hs >= 64) CHECK((p.offset_y >= 0 && p.offset_y <= hs - 64));
    else CHECK((p.offset_y <= 0 && p.offset_y >= hs - 64));
    if (ws >= 64) CHECK((p.offset_x >= 0 && p.offset_x <= ws - 64));
  }
  cfg.geometric = false;
  GeometricParams p = draw_geometric(cfg, 64, 64, rng);
  CHECK(p.scale == 1.0);
  CHECK(p.angle_deg == 0.0);
  CHECK(p.offset_y == 0);
}

TEST_CASE("HSV conversion matches the reference") {
  RngStream rng(6);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    auto got = rgb_to_hsv(r, g, b);
    auto want = testing::hsv_reference(r, g, b);
    for (size_t k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-9));
    auto back = hsv_to_rgb(got[0], got[1], got[2]);
    auto back_ref = testing::rgb_reference(got[0], got[1], got[2]);
    CHECK(back[0] == doctest::Approx(r).epsilon(1e-9));
    CHECK(back[1] == doctest::Approx(g).epsilon(1e-9));
    CHECK(back[2] == doctest::Approx(b).epsilon(1e-9));
    for (size_t k = 0; k < 3; ++k) CHECK(back[k] == doctest::Approx(back_ref[k]).epsilon(1e-9));
  }
  CHECK(rgb_to_hsv(1, 0, 0)[0] == 0.0);
  CHECK(rgb_to_hsv(0, 1, 0)[0] == doctest::Approx(120.0));
  CHECK(rgb_to_hsv(0, 0, 1)[0] == doctest::Approx(240.0));
}

TEST_CASE("photometric jitter matches a per-pixel reference") {
  const Tensor img = random_tensor({3, 5, 4}, 7, 0.0, 1.0);
  PhotometricParams p{0.1, 1.15, -12.0, 0.9, 1.1};
  Tensor got = apply_photometric(img, p);
  const int64_t hw = 20;
  double mean = 0;
  for (float v : img.data()) mean += v + p.brightness;
  mean /= static_cast<double>(img.numel());
  for (int64_t i = 0; i < hw; ++i) {
    double c[3];
    for (int k = 0; k < 3; ++k)
      c[k] = std::clamp(mean + p.contrast * (img[k * hw + i] + p.brightness - mean), 0.0, 1.0);
    auto hsv = testing::hsv_reference(c[0], c[1], c[2]);
    const double h = std::fmod(hsv[0] + p.hue_deg + 360.0, 360.0);
    auto rgb = testing::rgb_reference(h, std::min(1.0, hsv[1] * p.saturation),
                                      std::min(1.0, hsv[2] * p.value));
    for (int k = 0; k < 3; ++k) CHECK(got[k * hw + i] == doctest::Approx(rgb[static_cast<size_t>(k)]).epsilon(1e-5));
  }
  Tensor same = apply_photometric(img, PhotometricParams{});
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(same[i] == doctest::Approx(img[i]));
}

TEST_CASE("batches are deterministic functions of the stream") {
  std::vector<Sample> data{random_sample(40, 40, 8), random_sample(50, 36, 9)};
  AugmentConfig cfg;
  cfg.crop_size = 32;
  const std::vector<int64_t> idx{1, 0, 1};
  Batch a = make_batch(data, idx, cfg, RngStream(10));
  Batch b = make_batch(data, idx, cfg, RngStream(10));
  Batch c = make_batch(data, idx, cfg, RngStream(11));
  CHECK(a.images.shape() == Shape{3, 3, 32, 32});
  CHECK(a.targets.shape() == Shape{3, 7, 32, 32});
  CHECK(a.images == b.images);
  CHECK(a.targets == b.targets);
  CHECK_FALSE(a.images == c.images);
  for (float v : a.images.data()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(a.targets.sum() == doctest::Approx(3.0 * 32 * 32));
  const std::vector<int64_t> bad{2};
  CHECK_THROWS_AS(make_batch(data, bad, cfg, RngStream(1)), ValueError);
  cfg.scale_min = 2.0;
  CHECK_THROWS_AS(make_batch(data, idx, cfg, RngStream(1)), ConfigError);
}

TEST_CASE("disabled augmentation only crops") {
  std::vector<Sample> data{random_sample(32, 32, 12)};
  AugmentConfig cfg;
  cfg.crop_size = 32;
  cfg.geometric = false;
  cfg.photometric = false;
  const std::vector<int64_t> idx{0};
  Batch b = make_batch(data, idx, cfg, RngStream(3));
  CHECK(b.images == data[0].image.reshaped({1, 3, 32, 32}));
  CHECK(b.targets == to_onehot(data[0].labels).reshaped({1, 7, 32, 32}));
}
