#include "csrvolsr/png_writer.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <vector>

#include "csrvolsr/error.hpp"

namespace csrvolsr {

void write_png_gray(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels) {
  if (width < 1 || height < 1 || pixels.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorKind::PreconditionViolated, "png: bad image size");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorKind::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "libpng write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_triptych_png(const std::filesystem::path& path, const Volume& v) {
  const Shape3 s = v.shape;
  float hi = 0.0f;
  for (float x : v.data) hi = std::max(hi, x);
  if (hi <= 0.0f) hi = 1.0f;
  auto px = [&](float x) { return static_cast<std::uint8_t>(std::clamp(x / hi, 0.0f, 1.0f) * 255.0f + 0.5f); };

  // Panels: axial (x-y at mid z), sagittal (y-z at mid x), coronal (x-z at mid y).
  const int height = std::max({s.y, s.z});
  const int width = s.x + s.y + s.x;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(width) * height, 0);
  auto put = [&](int col, int row, float x) { img[static_cast<std::size_t>(row) * width + col] = px(x); };
  for (int i = 0; i < s.x; ++i)
    for (int j = 0; j < s.y; ++j) put(i, s.y - 1 - j, v.at(i, j, s.z / 2));
  for (int j = 0; j < s.y; ++j)
    for (int k = 0; k < s.z; ++k) put(s.x + j, s.z - 1 - k, v.at(s.x / 2, j, k));
  for (int i = 0; i < s.x; ++i)
    for (int k = 0; k < s.z; ++k) put(s.x + s.y + i, s.z - 1 - k, v.at(i, s.y / 2, k));
  write_png_gray(path, width, height, img);
}

}  // namespace csrvolsr
