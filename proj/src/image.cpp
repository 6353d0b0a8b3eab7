#include "mono/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "mono/error.hpp"

namespace mono {

uint8_t quantize_byte(float v, float lo, float hi) {
  const float t = (v - lo) / (hi - lo) * 255.0f;
  const long q = std::lroundf(t);
  return static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Image load_png(const std::string& path, FILE* fp) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("load_image: png init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("load_image: png init failed for " + path);
  }
  std::vector<uint8_t> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("load_image: corrupt PNG " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // Normalize every color layout to 8-bit RGB.
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const size_t stride = png_get_rowbytes(png, info);
  raw.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    const uint8_t* src = raw.data() + stride * y;
    float* dst = img.at(0, y);
    for (int i = 0; i < w * 3; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  }
  return img;
}

int read_ppm_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments per the netpbm grammar.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("load_image: malformed PPM header in " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

Image load_ppm(const std::string& path, bool gray) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_image: cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  const int w = read_ppm_int(in, path);
  const int h = read_ppm_int(in, path);
  const int maxval = read_ppm_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw IoError("load_image: unsupported PPM header in " + path);
  const int channels = gray ? 1 : 3;
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("load_image: truncated PPM " + path);
  Image img(w, h);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    for (int c = 0; c < 3; ++c)
      img.pixels[i * 3 + c] = static_cast<float>(raw[i * channels + (gray ? 0 : c)]) * scale;
  }
  return img;
}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("load_image: cannot open " + path);
  uint8_t sig[8] = {0};
  const size_t got = std::fread(sig, 1, 8, fp.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) {
    std::rewind(fp.get());
    return load_png(path, fp.get());
  }
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) {
    fp.reset();
    return load_ppm(path, sig[1] == '5');
  }
  throw IoError("load_image: unsupported file format (not PNG/PPM): " + path);
}

void save_png(const std::string& path, const Image& img) {
  if (img.empty()) throw ValidationError("save_png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("save_png: cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("save_png: png init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("save_png: png init failed for " + path);
  }
  std::vector<uint8_t> raw(static_cast<size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("save_png: write failed for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (size_t i = 0; i < raw.size(); ++i)
    raw[i] = quantize_byte(img.pixels[i], img.range_lo, img.range_hi);
  for (int y = 0; y < img.height; ++y)
    rows[y] = raw.data() + static_cast<size_t>(y) * img.width * 3;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mono
