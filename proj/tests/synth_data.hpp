#pragma once

// Procedural data for tests and the acceptance suite: a richly textured
// source image for pretraining, and a 10-class 32x32 labeled texture set in
// the CIFAR-10 binary layout standing in for the real corpus.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mono/dataset.hpp"
#include "mono/image.hpp"
#include "mono/rng.hpp"

namespace synthdata {

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// Smooth value noise: bilinear interpolation of a coarse random grid.
inline std::vector<float> value_noise(int w, int h, int cell, mono::SampleRng& rng) {
  const int gw = w / cell + 2, gh = h / cell + 2;
  std::vector<float> grid(static_cast<size_t>(gw) * gh);
  for (auto& v : grid) v = static_cast<float>(rng.uniform());
  std::vector<float> out(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float fx = static_cast<float>(x) / cell, fy = static_cast<float>(y) / cell;
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const float tx = fx - x0, ty = fy - y0;
      const float a = grid[static_cast<size_t>(y0) * gw + x0];
      const float b = grid[static_cast<size_t>(y0) * gw + x0 + 1];
      const float c = grid[static_cast<size_t>(y0 + 1) * gw + x0];
      const float d = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
      out[static_cast<size_t>(y) * w + x] =
          (a + tx * (b - a)) * (1 - ty) + (c + tx * (d - c)) * ty;
    }
  return out;
}

// Texture-world source: a mosaic of the same texture families the labeled
// classes are built from (gratings across orientation and period, checkers,
// rings, blobs, two-tone splits, gradients), at many spatial scales, plus a
// vertical luminance ramp as an up-direction cue. Scale-augmented crops of
// this image expose a pretext learner to the whole texture family at every
// apparent frequency, the way crops of a photograph expose natural texture.
inline mono::Image make_source_image(int w, int h, uint64_t seed) {
  mono::SampleRng rng(seed);
  mono::Image img(w, h);

  auto oct1 = value_noise(w, h, std::max(w / 6, 8), rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      float* p = img.at(x, y);
      const float ramp = 0.2f * (1.0f - static_cast<float>(y) / h);
      for (int c = 0; c < 3; ++c) p[c] = clamp01(0.3f + 0.3f * oct1[i] + ramp);
    }

  const int n_tiles = std::max(24, w * h / 4500);
  for (int t = 0; t < n_tiles; ++t) {
    const int tw = w / 12 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(w / 3)));
    const int th = h / 12 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(h / 3)));
    const int tx = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::max(w - tw, 1))));
    const int ty = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::max(h - th, 1))));
    const int family = static_cast<int>(rng.uniform_int(6));
    const float theta = static_cast<float>(rng.uniform(0, M_PI));
    const float period = static_cast<float>(rng.uniform(4.0, 0.35 * std::min(tw, th)));
    const float freq = 2.0f * static_cast<float>(M_PI) / std::max(period, 2.0f);
    const float phase = static_cast<float>(rng.uniform(0, 2 * M_PI));
    const float ca = std::cos(theta), sa = std::sin(theta);
    float col_a[3], col_b[3];
    for (int c = 0; c < 3; ++c) {
      col_a[c] = static_cast<float>(rng.uniform(0.05, 0.95));
      col_b[c] = static_cast<float>(rng.uniform(0.05, 0.95));
    }
    const float cx = tx + tw / 2.0f, cy = ty + th / 2.0f;
    const float blob_r = std::max(2.0f, 0.16f * std::min(tw, th));
    const float mixw = static_cast<float>(rng.uniform(0.55, 0.95));

    for (int y = ty; y < ty + th && y < h; ++y)
      for (int x = tx; x < tx + tw && x < w; ++x) {
        float v;
        switch (family) {
          case 0:  // grating
            v = 0.5f + 0.5f * std::sin(freq * (ca * x + sa * y) + phase);
            break;
          case 1: {  // checker
            const int cell = std::max(2, static_cast<int>(period * 0.5f));
            v = static_cast<float>(((x / cell) + (y / cell)) % 2);
            break;
          }
          case 2: {  // rings
            const float r = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
            v = 0.5f + 0.5f * std::sin(freq * r);
            break;
          }
          case 3: {  // blob grid
            const float gx = std::fmod(static_cast<float>(x - tx), 2.5f * blob_r) - 1.25f * blob_r;
            const float gy = std::fmod(static_cast<float>(y - ty), 2.5f * blob_r) - 1.25f * blob_r;
            v = std::exp(-0.5f * (gx * gx + gy * gy) / (0.3f * blob_r * blob_r));
            break;
          }
          case 4:  // two-tone split along theta
            v = (ca * (x - cx) + sa * (y - cy)) > 0 ? 1.0f : 0.0f;
            break;
          default:  // smooth gradient along theta
            v = clamp01(0.5f + (ca * (x - cx) + sa * (y - cy)) / std::max(tw, th));
            break;
        }
        float* p = img.at(x, y);
        for (int c = 0; c < 3; ++c)
          p[c] = clamp01((1 - mixw) * p[c] + mixw * ((1 - v) * col_a[c] + v * col_b[c]));
      }
  }

  // re-impose the up-direction ramp so rotation stays predictable everywhere
  for (int y = 0; y < h; ++y) {
    const float ramp = 0.16f * (0.5f - static_cast<float>(y) / h);
    for (int x = 0; x < w; ++x) {
      float* p = img.at(x, y);
      for (int c = 0; c < 3; ++c) p[c] = clamp01(p[c] + ramp);
    }
  }
  return img;
}

// 10 texture classes (gratings at four orientations, checkers, blobs, rings,
// two-tone split, noise texture, diagonal gradient), each instance randomized
// in color, phase, frequency, small angle jitter, brightness and pixel noise.
inline mono::Image make_class_image(int label, mono::SampleRng& rng, float noise_sigma = 0.06f,
                                    float angle_jitter_deg = 10.0f) {
  const int s = 32;
  mono::Image img(s, s);
  float ca_col[3], cb_col[3];
  for (int c = 0; c < 3; ++c) {
    ca_col[c] = static_cast<float>(rng.uniform(0.0, 1.0));
    cb_col[c] = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  const float brightness = static_cast<float>(rng.uniform(0.7, 1.3));
  const float jitter = static_cast<float>(rng.uniform(-angle_jitter_deg, angle_jitter_deg)) *
                       static_cast<float>(M_PI) / 180.0f;
  const float period = static_cast<float>(rng.uniform(2.5, 5.5));
  const float phase = static_cast<float>(rng.uniform(0, 2 * M_PI));
  const float freq = 2.0f * static_cast<float>(M_PI) / period;

  auto pattern = [&](int x, int y) -> float {
    switch (label) {
      case 0:
      case 1:
      case 2:
      case 3: {  // gratings at 0/45/90/135 degrees plus jitter
        const float theta = static_cast<float>(label) * static_cast<float>(M_PI) / 4.0f + jitter;
        return 0.5f + 0.5f * std::sin(freq * (std::cos(theta) * x + std::sin(theta) * y) + phase);
      }
      case 4: {  // checkerboard
        const int cell = 2 + static_cast<int>(period / 1.8f);
        return static_cast<float>(((x / cell) + (y / cell)) % 2);
      }
      case 5: {  // blobs: handled outside (needs per-image state)
        return 0.0f;
      }
      case 6: {  // concentric rings around a jittered center
        const float cx = 16.0f + 6.0f * std::sin(phase), cy = 16.0f + 6.0f * std::cos(phase);
        const float r = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
        return 0.5f + 0.5f * std::sin(freq * r);
      }
      case 7: {  // two-tone split with a tilted boundary
        const float split = 10.0f + 12.0f * static_cast<float>(std::fabs(std::sin(phase)));
        const float boundary = split + std::tan(jitter) * (x - 16.0f);
        return y < boundary ? 0.0f : 1.0f;
      }
      case 8:  // unstructured noise texture
        return static_cast<float>(rng.uniform());
      default: {  // smooth diagonal gradient, direction jittered
        const float theta = static_cast<float>(M_PI) / 4.0f + jitter;
        return (std::cos(theta) * x + std::sin(theta) * y) / (32.0f * 1.42f);
      }
    }
  };

  if (label == 5) {
    // gaussian blobs
    const int n_blobs = 3 + static_cast<int>(rng.uniform_int(4));
    std::vector<float> bx(static_cast<size_t>(n_blobs)), by(static_cast<size_t>(n_blobs)),
        br(static_cast<size_t>(n_blobs));
    for (int b = 0; b < n_blobs; ++b) {
      bx[static_cast<size_t>(b)] = static_cast<float>(rng.uniform(4, 28));
      by[static_cast<size_t>(b)] = static_cast<float>(rng.uniform(4, 28));
      br[static_cast<size_t>(b)] = static_cast<float>(rng.uniform(2.0, 4.5));
    }
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        float v = 0.0f;
        for (int b = 0; b < n_blobs; ++b) {
          const float dx = (x - bx[static_cast<size_t>(b)]) / br[static_cast<size_t>(b)];
          const float dy = (y - by[static_cast<size_t>(b)]) / br[static_cast<size_t>(b)];
          v = std::max(v, std::exp(-0.5f * (dx * dx + dy * dy)));
        }
        float* p = img.at(x, y);
        for (int c = 0; c < 3; ++c)
          p[c] = clamp01(brightness * ((1 - v) * ca_col[c] + v * cb_col[c]) +
                         noise_sigma * static_cast<float>(rng.normal()));
      }
    return img;
  }

  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const float v = clamp01(pattern(x, y));
      float* p = img.at(x, y);
      for (int c = 0; c < 3; ++c)
        p[c] = clamp01(brightness * ((1 - v) * ca_col[c] + v * cb_col[c]) +
                       noise_sigma * static_cast<float>(rng.normal()));
    }
  return img;
}

inline mono::LabeledImages make_texture_set(int total, uint64_t seed, float noise_sigma = 0.06f) {
  mono::LabeledImages out;
  out.num_classes = 10;
  for (int i = 0; i < total; ++i) {
    const int label = i % 10;
    mono::SampleRng rng(seed, static_cast<uint64_t>(i));
    out.images.push_back(make_class_image(label, rng, noise_sigma));
    out.labels.push_back(label);
  }
  return out;
}

// Writes train/test splits in the CIFAR-10 binary layout under dir.
inline void write_cifar_standin(const std::string& dir, int train_total, int test_total,
                                uint64_t seed, float noise_sigma = 0.06f) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  mono::save_cifar_file((fs::path(dir) / "data_batch_1.bin").string(),
                        make_texture_set(train_total, seed, noise_sigma));
  mono::save_cifar_file((fs::path(dir) / "test_batch.bin").string(),
                        make_texture_set(test_total, seed + 7919, noise_sigma));
}

}  // namespace synthdata
