#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mono {

// H x W x 3 float raster, interleaved RGB, row-major. `range_lo/hi` declare
// the nominal value range: loaders produce [0,1], normalize() moves it to
// [-1,1]; ops that assume a range validate against these.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // size = width*height*3
  float range_lo = 0.0f;
  float range_hi = 1.0f;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

  float* at(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* at(int x, int y) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  bool empty() const { return pixels.empty(); }
};

// PNG (any color type, 8/16 bit; alpha dropped, gray expanded) or binary PPM
// (P5/P6). Values scaled to [0,1]. Throws IoError on unreadable input.
Image load_image(const std::string& path);

// 8-bit RGB PNG. Values are quantized with quantize_byte against the image's
// declared range.
void save_png(const std::string& path, const Image& img);

// Maps v in [lo,hi] to a byte, round-half-away, clamped.
uint8_t quantize_byte(float v, float lo, float hi);

}  // namespace mono
