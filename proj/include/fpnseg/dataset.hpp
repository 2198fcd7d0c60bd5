#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fpnseg/augment.hpp"
#include "fpnseg/mask_codec.hpp"
#include "fpnseg/tensor.hpp"

namespace fpnseg {

struct DatasetEntry {
  std::string id;
  std::filesystem::path image;  // <id>_sat.png
  std::filesystem::path mask;   // <id>_mask.png
};

struct Dataset {
  std::vector<std::string> ids;
  std::vector<Sample> samples;
};

// Pairs in `dir`, sorted by id. A satellite image without its mask (or the
// reverse) is a DataError, as is a directory with no pairs.
std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir);

Sample load_sample(const DatasetEntry& entry);
Dataset load_dataset(const std::filesystem::path& dir);

// 8-bit RGB <-> [3,H,W] in [0, 1].
Tensor image_to_tensor(const RgbImage& image);
RgbImage tensor_to_image(const Tensor& image);

}  // namespace fpnseg
