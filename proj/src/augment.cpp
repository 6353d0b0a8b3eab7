#include "mono/augment.hpp"

#include <algorithm>
#include <cmath>

#include "mono/error.hpp"

namespace mono {

namespace {

constexpr double kPi = 3.14159265358979323846;

void fail_field(const std::string& field, const std::string& why) {
  throw ValidationError("augment." + field + ": " + why);
}

float luma(const float* p) { return 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]; }

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Bilinear tap at continuous pixel-center coordinates; missing neighbors read
// as zero fill.
inline void sample_bilinear_fill(const Image& img, double sx, double sy, float* out) {
  const double u = sx - 0.5, v = sy - 0.5;
  const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
  const float fx = static_cast<float>(u - x0), fy = static_cast<float>(v - y0);
  const float w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
  for (int c = 0; c < 3; ++c) out[c] = 0.0f;
  auto tap = [&](int x, int y, float w) {
    if (w == 0.0f || x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const float* p = img.at(x, y);
    for (int c = 0; c < 3; ++c) out[c] += w * p[c];
  };
  tap(x0, y0, w00);
  tap(x0 + 1, y0, w10);
  tap(x0, y0 + 1, w01);
  tap(x0 + 1, y0 + 1, w11);
}

// Largest axis-aligned rectangle centered in a W x H rectangle rotated by
// `rad`, conservatively shrunk to integer pixel bounds so that bilinear taps
// never reach the zero fill.
IntRect inscribed_rect(int W, int H, double rad) {
  const double sin_a = std::fabs(std::sin(rad)), cos_a = std::fabs(std::cos(rad));
  const double side_long = std::max(W, H), side_short = std::min(W, H);
  double wr, hr;
  if (side_short <= 2.0 * sin_a * cos_a * side_long || std::fabs(sin_a - cos_a) < 1e-10) {
    const double x = 0.5 * side_short;
    wr = (W >= H) ? x / sin_a : x / cos_a;
    hr = (W >= H) ? x / cos_a : x / sin_a;
  } else {
    const double cos_2a = cos_a * cos_a - sin_a * sin_a;
    wr = (W * cos_a - H * sin_a) / cos_2a;
    hr = (H * cos_a - W * sin_a) / cos_2a;
  }
  const double cx = W / 2.0, cy = H / 2.0;
  const double margin = 1.0;  // keeps all 4 bilinear taps inside the content
  int x0 = static_cast<int>(std::ceil(cx - wr / 2 + margin - 0.5));
  int x1 = static_cast<int>(std::floor(cx + wr / 2 - margin - 0.5));
  int y0 = static_cast<int>(std::ceil(cy - hr / 2 + margin - 0.5));
  int y1 = static_cast<int>(std::floor(cy + hr / 2 - margin - 0.5));
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, W - 1);
  y1 = std::min(y1, H - 1);
  IntRect r;
  r.x = std::min(x0, W - 1);
  r.y = std::min(y0, H - 1);
  r.w = std::max(x1 - x0 + 1, 1);
  r.h = std::max(y1 - y0 + 1, 1);
  return r;
}

bool aspect_ok(int w, int h, double gamma) {
  const double a = static_cast<double>(h) / static_cast<double>(w);
  return a >= gamma && a <= 1.0 / gamma;
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) fail_field("beta", "must be in (0,1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail_field("gamma", "must be in (0,1]");
  if (!(max_rot_deg >= 0.0 && max_rot_deg < 90.0)) fail_field("max_rot_deg", "must be in [0,90)");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) fail_field("flip_prob", "must be in [0,1]");
  if (!(jitter_low > 0.0)) fail_field("jitter_low", "must be positive");
  if (!(jitter_low <= jitter_high)) fail_field("jitter_high", "must be >= jitter_low");
  if (!(hue_range >= 0.0 && hue_range < 0.5)) fail_field("hue_range", "must be in [0,0.5)");
  if (target_size < 1) fail_field("target_size", "must be a positive int");
}

Image rot90(const Image& img, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return img;
  const int W = img.width, H = img.height;
  Image out((q == 2) ? W : H, (q == 2) ? H : W);
  out.range_lo = img.range_lo;
  out.range_hi = img.range_hi;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int sx, sy;
      switch (q) {
        case 1: sx = W - 1 - y, sy = x; break;          // 90 CCW
        case 2: sx = W - 1 - x, sy = H - 1 - y; break;  // 180
        default: sx = y, sy = H - 1 - x; break;         // 270
      }
      const float* s = img.at(sx, sy);
      float* d = out.at(x, y);
      d[0] = s[0], d[1] = s[1], d[2] = s[2];
    }
  }
  return out;
}

Image rotated_crop(const Image& src, double angle_deg, const IntRect& rect) {
  const double t = angle_deg * kPi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const double cx = src.width / 2.0, cy = src.height / 2.0;
  Image out(rect.w, rect.h);
  out.range_lo = src.range_lo;
  out.range_hi = src.range_hi;
  for (int y = 0; y < rect.h; ++y) {
    const double dy = (rect.y + y) + 0.5 - cy;
    for (int x = 0; x < rect.w; ++x) {
      const double dx = (rect.x + x) + 0.5 - cx;
      // Inverse map of a CCW rotation in y-down pixel coordinates.
      const double sx = ct * dx - st * dy + cx;
      const double sy = st * dx + ct * dy + cy;
      sample_bilinear_fill(src, sx, sy, out.at(x, y));
    }
  }
  return out;
}

std::pair<Image, IntRect> rotate_image(const Image& img, double angle_deg) {
  if (std::fmod(angle_deg, 90.0) == 0.0) {
    Image out = rot90(img, static_cast<int>(angle_deg / 90.0));
    return {out, IntRect{0, 0, out.width, out.height}};
  }
  if (!(std::fabs(angle_deg) < 90.0))
    throw ValidationError("rotate_image: |angle| must be < 90, got " + std::to_string(angle_deg));
  IntRect rect = inscribed_rect(img.width, img.height, angle_deg * kPi / 180.0);
  Image out = rotated_crop(img, angle_deg, IntRect{0, 0, img.width, img.height});
  return {out, rect};
}

CropSample sample_crop(SampleRng& rng, int region_w, int region_h, int64_t full_area,
                       const AugmentConfig& cfg) {
  if (region_w < 1 || region_h < 1)
    throw ValidationError("sample_crop: region must be at least 1x1");
  const double area_lo = cfg.beta * static_cast<double>(full_area);
  const double log_lo = std::log(cfg.gamma), log_hi = -std::log(cfg.gamma);

  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = rng.uniform(area_lo, static_cast<double>(full_area));
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));  // h/w
    const int w = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    if (w < 1 || h < 1 || w > region_w || h > region_h) continue;
    if (!aspect_ok(w, h, cfg.gamma)) continue;           // rounding skew
    if (static_cast<double>(w) * h < area_lo) continue;  // rounding undershoot
    CropSample s;
    s.crop.w = w;
    s.crop.h = h;
    s.crop.x = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(region_w - w + 1)));
    s.crop.y = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(region_h - h + 1)));
    return s;
  }

  // Largest centered crop satisfying the aspect bound (area bound exempt).
  int w, h;
  const double region_aspect = static_cast<double>(region_h) / region_w;
  if (region_aspect < cfg.gamma) {
    h = region_h;
    w = std::min(region_w, static_cast<int>(std::floor(region_h / cfg.gamma)));
  } else if (region_aspect > 1.0 / cfg.gamma) {
    w = region_w;
    h = std::min(region_h, static_cast<int>(std::floor(region_w / cfg.gamma)));
  } else {
    w = region_w;
    h = region_h;
  }
  if (w < 1 || h < 1 || !aspect_ok(w, h, cfg.gamma)) {
    w = h = std::min(region_w, region_h);  // square always satisfies the bound
  }
  CropSample s;
  s.fallback = true;
  s.crop.w = w;
  s.crop.h = h;
  s.crop.x = (region_w - w) / 2;
  s.crop.y = (region_h - h) / 2;
  return s;
}

Image crop(const Image& img, const IntRect& rect) {
  if (rect.x < 0 || rect.y < 0 || rect.w < 1 || rect.h < 1 || rect.x + rect.w > img.width ||
      rect.y + rect.h > img.height)
    throw ValidationError("crop: rect outside image bounds");
  Image out(rect.w, rect.h);
  out.range_lo = img.range_lo;
  out.range_hi = img.range_hi;
  for (int y = 0; y < rect.h; ++y)
    std::copy_n(img.at(rect.x, rect.y + y), static_cast<size_t>(rect.w) * 3, out.at(0, y));
  return out;
}

Image hflip(const Image& img) {
  Image out(img.width, img.height);
  out.range_lo = img.range_lo;
  out.range_hi = img.range_hi;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float* s = img.at(img.width - 1 - x, y);
      float* d = out.at(x, y);
      d[0] = s[0], d[1] = s[1], d[2] = s[2];
    }
  return out;
}

namespace {

void rgb_to_hsv(const float* rgb, float* hsv) {
  const float r = rgb[0], g = rgb[1], b = rgb[2];
  const float maxc = std::max({r, g, b}), minc = std::min({r, g, b});
  const float d = maxc - minc;
  float h = 0.0f;
  if (d > 0.0f) {
    if (maxc == r)
      h = (g - b) / d;
    else if (maxc == g)
      h = (b - r) / d + 2.0f;
    else
      h = (r - g) / d + 4.0f;
    h /= 6.0f;
    if (h < 0.0f) h += 1.0f;
  }
  hsv[0] = h;
  hsv[1] = maxc > 0.0f ? d / maxc : 0.0f;
  hsv[2] = maxc;
}

void hsv_to_rgb(const float* hsv, float* rgb) {
  const float h = hsv[0], s = hsv[1], v = hsv[2];
  const float hh = h * 6.0f;
  const int i = static_cast<int>(hh) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1.0f - s), q = v * (1.0f - f * s), t = v * (1.0f - (1.0f - f) * s);
  switch (i) {
    case 0: rgb[0] = v, rgb[1] = t, rgb[2] = p; break;
    case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
    case 2: rgb[0] = p, rgb[1] = v, rgb[2] = t; break;
    case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
    case 4: rgb[0] = t, rgb[1] = p, rgb[2] = v; break;
    default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
  }
}

}  // namespace

Image color_jitter(const Image& img, float brightness, float contrast, float saturation,
                   float hue_shift) {
  if (!(brightness > 0.0f && contrast > 0.0f && saturation >= 0.0f))
    throw ValidationError("color_jitter: factors must be positive");
  if (!(std::fabs(hue_shift) < 0.5f))
    throw ValidationError("color_jitter: |hue shift| must be < 0.5");
  for (float v : img.pixels)
    if (v < -1e-6f || v > 1.0f + 1e-6f)
      throw ValidationError("color_jitter: input pixel " + std::to_string(v) +
                            " outside [0,1] range");

  Image out = img;
  for (auto& v : out.pixels) v = clamp01(v * brightness);

  double mean_gray = 0.0;
  const size_t npx = out.pixels.size() / 3;
  for (size_t i = 0; i < npx; ++i) mean_gray += luma(out.pixels.data() + i * 3);
  const float mg = static_cast<float>(mean_gray / static_cast<double>(npx));
  for (auto& v : out.pixels) v = clamp01(contrast * v + (1.0f - contrast) * mg);

  for (size_t i = 0; i < npx; ++i) {
    float* p = out.pixels.data() + i * 3;
    const float l = luma(p);
    for (int c = 0; c < 3; ++c) p[c] = clamp01(saturation * p[c] + (1.0f - saturation) * l);
  }

  if (hue_shift != 0.0f) {
    for (size_t i = 0; i < npx; ++i) {
      float* p = out.pixels.data() + i * 3;
      float hsv[3];
      rgb_to_hsv(p, hsv);
      hsv[0] += hue_shift;
      hsv[0] -= std::floor(hsv[0]);
      hsv_to_rgb(hsv, p);
      for (int c = 0; c < 3; ++c) p[c] = clamp01(p[c]);
    }
  }
  return out;
}

Image normalize(const Image& img) {
  Image out = img;
  for (auto& v : out.pixels) v = 2.0f * v - 1.0f;
  out.range_lo = -1.0f;
  out.range_hi = 1.0f;
  return out;
}

Image bilinear_resize(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw ValidationError("bilinear_resize: output dims must be positive");
  Image out(out_w, out_h);
  out.range_lo = img.range_lo;
  out.range_hi = img.range_hi;
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double v = (y + 0.5) * sy - 0.5;
    v = std::clamp(v, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(v);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float fy = static_cast<float>(v - y0);
    for (int x = 0; x < out_w; ++x) {
      double u = (x + 0.5) * sx - 0.5;
      u = std::clamp(u, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(u);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float fx = static_cast<float>(u - x0);
      const float* p00 = img.at(x0, y0);
      const float* p10 = img.at(x1, y0);
      const float* p01 = img.at(x0, y1);
      const float* p11 = img.at(x1, y1);
      float* d = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        // lerp form keeps constants exactly constant
        const float top = p00[c] + fx * (p10[c] - p00[c]);
        const float bot = p01[c] + fx * (p11[c] - p01[c]);
        d[c] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

Image augment_sample(const Image& source, SampleRng& rng, const AugmentConfig& cfg) {
  if (source.width < 2 || source.height < 2)
    throw ValidationError("augment_sample: source must be at least 2x2");
  const int64_t full_area = static_cast<int64_t>(source.width) * source.height;

  double angle = 0.0;
  IntRect region{0, 0, source.width, source.height};
  if (cfg.rotation && cfg.max_rot_deg > 0.0) {
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();  // keep the angle strictly inside (-max, max)
    angle = cfg.max_rot_deg * (2.0 * u - 1.0);
    region = inscribed_rect(source.width, source.height, angle * kPi / 180.0);
  }

  CropParams cp;
  if (cfg.scale_crop) {
    cp = sample_crop(rng, region.w, region.h, full_area, cfg).crop;
  } else {
    const int side = std::min(region.w, region.h);
    cp.w = cp.h = side;
    cp.x = (region.w - side) / 2;
    cp.y = (region.h - side) / 2;
  }
  const IntRect abs_rect{region.x + cp.x, region.y + cp.y, cp.w, cp.h};

  Image patch = (angle == 0.0) ? crop(source, abs_rect) : rotated_crop(source, angle, abs_rect);

  if (cfg.flip && rng.uniform() < cfg.flip_prob) patch = hflip(patch);

  if (cfg.jitter) {
    const float b = static_cast<float>(rng.uniform(cfg.jitter_low, cfg.jitter_high));
    const float c = static_cast<float>(rng.uniform(cfg.jitter_low, cfg.jitter_high));
    const float s = static_cast<float>(rng.uniform(cfg.jitter_low, cfg.jitter_high));
    const float h = static_cast<float>(rng.uniform(-cfg.hue_range, cfg.hue_range));
    patch = color_jitter(patch, b, c, s, h);
  }

  patch = normalize(patch);
  return bilinear_resize(patch, cfg.target_size, cfg.target_size);
}

}  // namespace mono
