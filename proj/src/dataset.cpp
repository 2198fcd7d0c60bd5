#include "fpnseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fpnseg/error.hpp"
#include "fpnseg/png_io.hpp"

namespace fpnseg {

namespace {

constexpr std::string_view kImageSuffix = "_sat.png";
constexpr std::string_view kMaskSuffix = "_mask.png";

bool strip_suffix(const std::string& name, std::string_view suffix, std::string& id) {
  if (name.size() <= suffix.size() ||
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
    return false;
  id = name.substr(0, name.size() - suffix.size());
  return true;
}

}  // namespace

std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw DataError("dataset directory not found: " + dir.string());
  std::map<std::string, DatasetEntry> found;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (!f.is_regular_file()) continue;
    const std::string name = f.path().filename().string();
    std::string id;
    if (strip_suffix(name, kImageSuffix, id)) {
      found[id].id = id;
      found[id].image = f.path();
    } else if (strip_suffix(name, kMaskSuffix, id)) {
      found[id].id = id;
      found[id].mask = f.path();
    }
  }
  std::vector<DatasetEntry> out;
  for (auto& [id, e] : found) {
    if (e.mask.empty())
      throw DataError("missing mask for " + e.image.string() + " (expected " +
                      (dir / (id + std::string(kMaskSuffix))).string() + ")");
    if (e.image.empty())
      throw DataError("missing image for " + e.mask.string() + " (expected " +
                      (dir / (id + std::string(kImageSuffix))).string() + ")");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError("no samples found in " + dir.string());
  return out;
}

Sample load_sample(const DatasetEntry& entry) {
  RgbImage img = read_png(entry.image);
  RgbImage mask = read_png(entry.mask);
  if (img.height != mask.height || img.width != mask.width)
    throw DataError("image and mask sizes differ for " + entry.id + ": " +
                    std::to_string(img.height) + "x" + std::to_string(img.width) +
                    " vs " + std::to_string(mask.height) + "x" +
                    std::to_string(mask.width));
  return Sample{image_to_tensor(img), decode_mask(mask)};
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  for (const auto& e : list_dataset(dir)) {
    d.ids.push_back(e.id);
    d.samples.push_back(load_sample(e));
  }
  return d;
}

Tensor image_to_tensor(const RgbImage& image) {
  const int64_t H = image.height, W = image.width;
  Tensor t({3, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const Rgb c = image.at(y, x);
      t.at(0, y, x) = static_cast<float>(c.r) / 255.0f;
      t.at(1, y, x) = static_cast<float>(c.g) / 255.0f;
      t.at(2, y, x) = static_cast<float>(c.b) / 255.0f;
    }
  return t;
}

RgbImage tensor_to_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("tensor_to_image: expected [3,H,W], got " +
                     shape_string(image.shape()));
  const int64_t H = image.dim(1), W = image.dim(2);
  RgbImage out(H, W);
  auto q = [](float v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      out.set(y, x, {q(image.at(0, y, x)), q(image.at(1, y, x)), q(image.at(2, y, x))});
  return out;
}

}  // namespace fpnseg
