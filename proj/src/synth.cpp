#include "fpnseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <array>

#include "fpnseg/png_io.hpp"

namespace fpnseg {

namespace {

LabelMap draw_layout(int64_t size, RngStream& rng) {
  LabelMap labels(size, size, static_cast<uint8_t>(rng.below(kNumClasses)));
  const int64_t shapes = 2 + static_cast<int64_t>(rng.below(3));
  const auto extent = static_cast<double>(size);
  for (int64_t s = 0; s < shapes; ++s) {
    const auto cls = static_cast<uint8_t>(rng.below(kNumClasses));
    const bool ellipse = rng.uniform() < 0.5;
    const double h = rng.uniform(0.3, 0.6) * extent;
    const double w = rng.uniform(0.3, 0.6) * extent;
    // Shapes lie fully inside the frame.
    const double cy = rng.uniform(h / 2.0, extent - h / 2.0);
    const double cx = rng.uniform(w / 2.0, extent - w / 2.0);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - cy) / (h / 2.0);
        const double dx = (static_cast<double>(x) + 0.5 - cx) / (w / 2.0);
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) labels.at(y, x) = cls;
      }
  }
  return labels;
}

// Every class that appears covers at least this fraction of the image.
constexpr double kMinClassFraction = 0.04;

bool has_slivers(const LabelMap& labels) {
  std::array<int64_t, kNumClasses> counts{};
  for (uint8_t v : labels.labels) ++counts[v];
  const auto min_count = static_cast<int64_t>(
      kMinClassFraction * static_cast<double>(labels.labels.size()));
  for (int64_t c : counts)
    if (c > 0 && c < min_count) return true;
  return false;
}

}  // namespace

SynthPair synth_pair(int64_t size, const RngStream& root) {
  if (size <= 0 || size % 32 != 0)
    throw ValueError("synthetic image size must be a positive multiple of 32");
  SynthPair out;
  RngStream rng = root.derive("layout", 0);
  for (uint64_t attempt = 0;; ++attempt) {
    rng = root.derive("layout", attempt);
    out.labels = draw_layout(size, rng);
    if (!has_slivers(out.labels) || attempt == 255) break;
  }

  out.image = RgbImage(size, size);
  RngStream noise = root.derive("noise");
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const auto& base = kSynthPalette[out.labels.at(y, x)];
      uint8_t px[3];
      for (int c = 0; c < 3; ++c) {
        double v = base[static_cast<size_t>(c)] +
                   noise.uniform(-kSynthNoise, kSynthNoise);
        px[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
      out.image.set(y, x, {px[0], px[1], px[2]});
    }
  return out;
}

void write_synth_dataset(const std::filesystem::path& dir, int64_t n,
                         int64_t size, uint64_t seed) {
  if (n <= 0) throw ValueError("synthetic dataset size must be positive");
  std::filesystem::create_directories(dir);
  const RngStream root(seed);
  for (int64_t k = 0; k < n; ++k) {
    SynthPair p = synth_pair(size, root.derive("synth", static_cast<uint64_t>(k)));
    char id[32];
    std::snprintf(id, sizeof id, "synth_%03lld", static_cast<long long>(k));
    write_png(dir / (std::string(id) + "_sat.png"), p.image);
    write_png(dir / (std::string(id) + "_mask.png"), encode_mask(p.labels));
  }
}

}  // namespace fpnseg
