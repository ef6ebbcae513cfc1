#include "derain/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <vector>

namespace derain {

namespace {

struct FileCloser {
  FILE* fp = nullptr;
  ~FileCloser() {
    if (fp) fclose(fp);
  }
};

}  // namespace

Tensor<float> read_png(const std::string& path) {
  FileCloser file;
  file.fp = std::fopen(path.c_str(), "rb");
  require(file.fp != nullptr, "cannot open PNG for reading: ", path);

  unsigned char sig[8];
  require(std::fread(sig, 1, 8, file.fp) == 8 && !png_sig_cmp(sig, 0, 8),
          "not a PNG file: ", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("png_create_info_struct failed");
  }

  std::vector<unsigned char> pixels;
  png_uint_32 width = 0, height = 0;
  int channels = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("corrupt PNG: ", path);
  }

  png_init_io(png, file.fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);

  png_read_update_info(png, info);
  channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported PNG channel count ", channels, ": ", path);
  }

  size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<float> img(Shape::image(int(height), int(width), channels));
  const float inv = 1.0f / 255.0f;
  for (png_uint_32 y = 0; y < height; ++y) {
    const unsigned char* src = pixels.data() + y * rowbytes;
    float* dst = img.data.data() + size_t(y) * width * channels;
    for (size_t i = 0; i < size_t(width) * channels; ++i) dst[i] = float(src[i]) * inv;
  }
  return img;
}

void write_png(const std::string& path, const Tensor<float>& img) {
  require(img.shape.ndim == 3, "write_png: expected (h,w,c) image, got ", img.shape.str());
  int channels = img.c();
  require(channels == 1 || channels == 3, "write_png: expected 1 or 3 channels, got ", channels);
  require(img.h() > 0 && img.w() > 0, "write_png: empty image");

  FileCloser file;
  file.fp = std::fopen(path.c_str(), "wb");
  require(file.fp != nullptr, "cannot open PNG for writing: ", path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("png_create_info_struct failed");
  }

  size_t rowbytes = size_t(img.w()) * channels;
  std::vector<unsigned char> pixels(rowbytes * img.h());
  for (int64_t i = 0; i < img.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, img[i]));
    pixels[size_t(i)] = (unsigned char)std::lround(v * 255.0f);
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG write failed: ", path);
  }

  png_init_io(png, file.fp);
  png_set_IHDR(png, info, png_uint_32(img.w()), png_uint_32(img.h()), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h());
  for (int y = 0; y < img.h(); ++y) rows[size_t(y)] = pixels.data() + size_t(y) * rowbytes;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace derain
