#include "voxelview/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace voxelview {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void io_error(const std::string& path, const std::string& why) {
  throw std::runtime_error("image " + path + ": " + why);
}

}  // namespace

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<double>& rgb) {
  if (static_cast<long>(rgb.size()) != 3L * width * height)
    io_error(path, "pixel buffer size does not match dimensions");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) io_error(path, "cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) io_error(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_error(path, "libpng write failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const long plane = static_cast<long>(width) * height;
  std::vector<png_byte> row(static_cast<size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb[static_cast<size_t>(c * plane + y * width + x)], 0.0, 1.0);
        row[static_cast<size_t>(x * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<double> read_png_rgb8(const std::string& path, int& width, int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) io_error(path, "missing or unreadable");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) io_error(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_error(path, "libpng read failed (not a valid PNG?)");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));

  // Normalize to 8-bit RGB regardless of stored layout.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_error(path, "unsupported pixel layout");
  }

  std::vector<png_byte> row(static_cast<size_t>(width) * 3);
  std::vector<double> rgb(static_cast<size_t>(3) * width * height);
  const long plane = static_cast<long>(width) * height;
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[static_cast<size_t>(c * plane + y * width + x)] =
            static_cast<double>(row[static_cast<size_t>(x * 3 + c)]) / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return rgb;
}

void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<double>& values, double lo, double hi) {
  if (static_cast<long>(values.size()) != static_cast<long>(width) * height)
    io_error(path, "value buffer size does not match dimensions");
  if (!(hi > lo)) io_error(path, "invalid value range");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) io_error(path, "cannot open for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) io_error(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_error(path, "libpng write failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = values[static_cast<size_t>(y) * width + x];
      const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
      const auto q = static_cast<uint16_t>(std::lround(s * 65535.0));
      row[static_cast<size_t>(x) * 2] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
      row[static_cast<size_t>(x) * 2 + 1] = static_cast<png_byte>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace voxelview
