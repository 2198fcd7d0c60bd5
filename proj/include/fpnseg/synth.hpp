#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "fpnseg/mask_codec.hpp"
#include "fpnseg/rng.hpp"

namespace fpnseg {

// Base appearance colour of each class in synthetic images, in [0, 1].
inline constexpr std::array<std::array<double, 3>, kNumClasses> kSynthPalette{{
    {0.55, 0.55, 0.60},  // urban: grey
    {0.85, 0.75, 0.30},  // agriculture: straw
    {0.55, 0.80, 0.35},  // rangeland: light green
    {0.10, 0.40, 0.15},  // forest: dark green
    {0.10, 0.25, 0.70},  // water: blue
    {0.95, 0.90, 0.80},  // barren: sand
    {0.35, 0.10, 0.35},  // unknown: purple
}};

// Per-channel amplitude of the uniform additive noise.
inline constexpr double kSynthNoise = 0.06;

struct SynthPair {
  RgbImage image;
  LabelMap labels;
};

// A background class overlaid with random axis-aligned rectangles and
// ellipses, each region filled with its class colour plus noise.
SynthPair synth_pair(int64_t size, const RngStream& rng);

// Writes n pairs as <dir>/synth_<k>_sat.png and synth_<k>_mask.png.
void write_synth_dataset(const std::filesystem::path& dir, int64_t n,
                         int64_t size, uint64_t seed);

}  // namespace fpnseg
