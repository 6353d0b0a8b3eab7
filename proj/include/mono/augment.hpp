#pragma once

#include <utility>

#include "mono/image.hpp"
#include "mono/rng.hpp"

namespace mono {

// Parameters of the synthetic-augmentation protocol: constrained random
// resized crops (beta = min area fraction, gamma = aspect bound), pre-crop
// rotation, horizontal flips, color jitter, normalization to (-1,1) and
// bilinear resize to target_size. The enable flags drive the ablation grid.
struct AugmentConfig {
  double beta = 1e-3;
  double gamma = 0.75;
  double max_rot_deg = 35.0;
  double flip_prob = 0.5;
  double jitter_low = 0.6;
  double jitter_high = 1.4;
  double hue_range = 0.1;
  int target_size = 32;
  bool scale_crop = true;
  bool rotation = true;
  bool jitter = true;
  bool flip = true;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

struct CropParams {
  int x = 0, y = 0;  // top-left, relative to the sampled region
  int w = 0, h = 0;
};

struct IntRect {
  int x = 0, y = 0, w = 0, h = 0;
};

struct CropSample {
  CropParams crop;
  bool fallback = false;  // centered fallback crop; exempt from the area bound
};

// Exact lossless rotation by quarter_turns*90 degrees counter-clockwise.
Image rot90(const Image& img, int quarter_turns);

// Rotation about the image center. Exact 90-degree multiples take the lossless
// permutation path; other angles (|angle| < 90) use bilinear resampling with
// zero fill. Also returns the maximal axis-aligned rectangle fully inside the
// rotated source content; crops must stay inside it to avoid border fill.
std::pair<Image, IntRect> rotate_image(const Image& img, double angle_deg);

// Extracts the axis-aligned rect from the rotation of src by angle_deg,
// bit-identical to rotate_image followed by crop but touching only the rect.
Image rotated_crop(const Image& src, double angle_deg, const IntRect& rect);

// Samples crop area uniformly in [beta*full_area, full_area] and log-aspect
// uniformly in [ln gamma, ln 1/gamma]; rejects and resamples up to 10 times
// when the implied (w,h) does not fit the region or integer rounding breaks a
// constraint, then falls back to the largest valid centered crop. full_area is
// the original W*H even when the region is an inscribed rectangle.
CropSample sample_crop(SampleRng& rng, int region_w, int region_h, int64_t full_area,
                       const AugmentConfig& cfg);

Image crop(const Image& img, const IntRect& rect);

Image hflip(const Image& img);

// Brightness, contrast (blend with mean luma), saturation (per-pixel blend
// with luma), then hue rotation by h as a fraction of the full circle in HSV.
// Input must be in [0,1]; output clamped to [0,1].
Image color_jitter(const Image& img, float brightness, float contrast, float saturation,
                   float hue_shift);

// x -> 2x - 1; declared range becomes (-1, 1).
Image normalize(const Image& img);

// Align-corners-false bilinear resampling with edge clamping.
Image bilinear_resize(const Image& img, int out_w, int out_h);

// Full pipeline: rotation -> crop inside the inscribed rect -> flip -> jitter
// -> normalize -> resize to S x S. Disabled stages are identity; with
// scale_crop disabled a fixed center crop of the maximal square is used. Pure
// function of (source, rng stream, cfg).
Image augment_sample(const Image& source, SampleRng& rng, const AugmentConfig& cfg);

}  // namespace mono
