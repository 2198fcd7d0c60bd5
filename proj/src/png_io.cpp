#include "fpnseg/png_io.hpp"

#include <png.h>

#include <cstring>

namespace fpnseg {

namespace {

struct ImageGuard {
  png_image image;
  ImageGuard() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~ImageGuard() { png_image_free(&image); }
};

std::vector<uint8_t> read_raw(const std::filesystem::path& path,
                              png_uint_32 format, int64_t& h, int64_t& w) {
  ImageGuard g;
  if (!png_image_begin_read_from_file(&g.image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + g.image.message);
  g.image.format = format;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(g.image));
  if (!png_image_finish_read(&g.image, nullptr, buf.data(), 0, nullptr))
    throw IoError("cannot decode PNG " + path.string() + ": " + g.image.message);
  h = g.image.height;
  w = g.image.width;
  return buf;
}

void write_raw(const std::filesystem::path& path, png_uint_32 format,
               int64_t h, int64_t w, const uint8_t* data) {
  ImageGuard g;
  g.image.width = static_cast<png_uint_32>(w);
  g.image.height = static_cast<png_uint_32>(h);
  g.image.format = format;
  if (!png_image_write_to_file(&g.image, path.c_str(), 0, data, 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + g.image.message);
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  int64_t h = 0, w = 0;
  auto rgba = read_raw(path, PNG_FORMAT_RGBA, h, w);
  RgbImage out(h, w);
  for (int64_t i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c)
      out.pixels[static_cast<size_t>(3 * i + c)] = rgba[static_cast<size_t>(4 * i + c)];
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != static_cast<size_t>(image.height * image.width * 3))
    throw ShapeError("RGB image dimensions do not match its storage");
  write_raw(path, PNG_FORMAT_RGB, image.height, image.width, image.pixels.data());
}

LabelMap read_label_png(const std::filesystem::path& path) {
  int64_t h = 0, w = 0;
  auto grey = read_raw(path, PNG_FORMAT_GRAY, h, w);
  LabelMap out(h, w);
  out.labels = std::move(grey);
  try {
    out.validate();
  } catch (const Error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  labels.validate();
  write_raw(path, PNG_FORMAT_GRAY, labels.height, labels.width,
            labels.labels.data());
}

}  // namespace fpnseg
