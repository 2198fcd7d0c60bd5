#pragma once

#include <cstdint>
#include <filesystem>

#include "fpnseg/mask_codec.hpp"

namespace fpnseg {

// Any 8/16-bit grey, palette, RGB or RGBA PNG; alpha is dropped.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Label maps are stored as 8-bit greyscale PNGs holding class indices.
LabelMap read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace fpnseg
