#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mono/augment.hpp"
#include "mono/error.hpp"
#include "mono/rng.hpp"

using namespace mono;

namespace {

Image make_noise_image(int w, int h, uint64_t seed) {
  SampleRng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

Image quad2x2(float a, float b, float c, float d) {
  Image img(2, 2);
  for (int ch = 0; ch < 3; ++ch) {
    img.at(0, 0)[ch] = a;
    img.at(1, 0)[ch] = b;
    img.at(0, 1)[ch] = c;
    img.at(1, 1)[ch] = d;
  }
  return img;
}

}  // namespace

TEST_CASE("rotate_image by 0 is identity with full inscribed rect") {
  Image img = make_noise_image(7, 5, 1);
  auto [out, rect] = rotate_image(img, 0.0);
  CHECK(out.pixels == img.pixels);
  CHECK(rect.x == 0);
  CHECK(rect.y == 0);
  CHECK(rect.w == 7);
  CHECK(rect.h == 5);
}

TEST_CASE("rotate_image 90 takes the exact permutation path") {
  Image img = quad2x2(1, 2, 3, 4);  // [[a,b],[c,d]]
  auto [out, rect] = rotate_image(img, 90.0);
  // expected [[b,d],[a,c]]
  CHECK(out.at(0, 0)[0] == 2);
  CHECK(out.at(1, 0)[0] == 4);
  CHECK(out.at(0, 1)[0] == 1);
  CHECK(out.at(1, 1)[0] == 3);
  CHECK(rect.w == 2);
  CHECK(rect.h == 2);
}

TEST_CASE("four quarter turns restore the image bitwise") {
  Image img = make_noise_image(9, 6, 2);
  Image r = img;
  for (int i = 0; i < 4; ++i) r = rot90(r, 1);
  CHECK(r.pixels == img.pixels);
}

TEST_CASE("crops inside the inscribed rect never touch fill values") {
  // Mask-propagation oracle: rotate an all-ones validity mask; everything
  // inside the inscribed rect must still be one.
  for (double angle : {-34.9, -20.0, -5.0, 3.0, 17.5, 34.9}) {
    Image ones(40, 30, 1.0f);
    auto [rot, rect] = rotate_image(ones, angle);
    for (int y = rect.y; y < rect.y + rect.h; ++y)
      for (int x = rect.x; x < rect.x + rect.w; ++x)
        for (int c = 0; c < 3; ++c) {
          CHECK(rot.at(x, y)[c] == doctest::Approx(1.0f).epsilon(1e-6));
        }
  }
}

TEST_CASE("fused rotated_crop matches rotate-then-crop bitwise") {
  Image img = make_noise_image(33, 27, 3);
  for (double angle : {-28.0, 11.25, 33.0}) {
    auto [rot, rect] = rotate_image(img, angle);
    Image via_full = crop(rot, rect);
    Image fused = rotated_crop(img, angle, rect);
    CHECK(via_full.pixels == fused.pixels);
  }
}

TEST_CASE("sample_crop with beta=gamma=1 forces the full square region") {
  AugmentConfig cfg;
  cfg.beta = 1.0;
  cfg.gamma = 1.0;
  SampleRng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto s = sample_crop(rng, 64, 64, 64 * 64, cfg);
    CHECK(s.crop.w == 64);
    CHECK(s.crop.h == 64);
    CHECK(s.crop.x == 0);
    CHECK(s.crop.y == 0);
  }
}

TEST_CASE("sample_crop constraint suite at the protocol values") {
  const int W = 2560, H = 1920;
  for (double beta : {1e-3, 0.08}) {
    AugmentConfig cfg;
    cfg.beta = beta;
    cfg.gamma = 0.75;
    SampleRng rng(5);
    int fallbacks = 0;
    const int trials = 100000;
    int violations = 0;
    for (int i = 0; i < trials; ++i) {
      auto s = sample_crop(rng, W, H, static_cast<int64_t>(W) * H, cfg);
      const double aspect = static_cast<double>(s.crop.h) / s.crop.w;
      if (s.fallback) {
        ++fallbacks;
        if (!(aspect >= cfg.gamma && aspect <= 1.0 / cfg.gamma)) ++violations;
        continue;
      }
      const bool area_ok =
          static_cast<double>(s.crop.w) * s.crop.h >= beta * static_cast<double>(W) * H;
      const bool asp_ok = aspect >= cfg.gamma && aspect <= 1.0 / cfg.gamma;
      const bool fits = s.crop.x + s.crop.w <= W && s.crop.y + s.crop.h <= H && s.crop.x >= 0 &&
                        s.crop.y >= 0;
      if (!(area_ok && asp_ok && fits)) ++violations;
    }
    CHECK(violations == 0);
    CHECK(fallbacks < trials / 1000);  // < 0.1%
  }
}

TEST_CASE("sample_crop rejects degenerate regions") {
  AugmentConfig cfg;
  SampleRng rng(6);
  CHECK_THROWS_AS(sample_crop(rng, 0, 10, 100, cfg), ValidationError);
}

TEST_CASE("hflip is an involution and reverses columns") {
  Image img = quad2x2(1, 2, 3, 4);
  Image f = hflip(img);
  CHECK(f.at(0, 0)[0] == 2);
  CHECK(f.at(1, 0)[0] == 1);
  CHECK(f.at(0, 1)[0] == 4);
  CHECK(f.at(1, 1)[0] == 3);
  CHECK(hflip(f).pixels == img.pixels);

  Image sym = quad2x2(7, 7, 9, 9);
  CHECK(hflip(sym).pixels == sym.pixels);
}

TEST_CASE("color_jitter unit factors are the identity") {
  Image img = make_noise_image(8, 8, 7);
  Image out = color_jitter(img, 1.0f, 1.0f, 1.0f, 0.0f);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(std::fabs(out.pixels[i] - img.pixels[i]) < 1e-6f);
}

TEST_CASE("color_jitter brightness doubles a constant gray") {
  Image img(4, 4, 0.25f);
  Image out = color_jitter(img, 2.0f, 1.0f, 1.0f, 0.0f);
  for (float v : out.pixels) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("color_jitter zero saturation collapses red to its luma") {
  Image img(1, 1);
  img.at(0, 0)[0] = 1.0f;
  Image out = color_jitter(img, 1.0f, 1.0f, 0.0f, 0.0f);
  for (int c = 0; c < 3; ++c) CHECK(out.at(0, 0)[c] == doctest::Approx(0.299f).epsilon(1e-6));
}

TEST_CASE("color_jitter rejects out-of-range input") {
  Image img(2, 2, 1.5f);
  CHECK_THROWS_AS(color_jitter(img, 1.0f, 1.0f, 1.0f, 0.0f), ValidationError);
}

TEST_CASE("normalize maps endpoints and is invertible") {
  Image img(1, 3);
  img.at(0, 0)[0] = 0.0f;
  img.at(0, 1)[0] = 1.0f;
  img.at(0, 2)[0] = 0.5f;
  Image out = normalize(img);
  CHECK(out.at(0, 0)[0] == -1.0f);
  CHECK(out.at(0, 1)[0] == 1.0f);
  CHECK(out.at(0, 2)[0] == 0.0f);
  CHECK(out.range_lo == -1.0f);
  // inverse map restores exactly
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK((out.pixels[i] + 1.0f) * 0.5f == img.pixels[i]);
}

TEST_CASE("normalize is linear in the image mean") {
  Image img = make_noise_image(16, 16, 8);
  Image out = normalize(img);
  double m_in = 0, m_out = 0;
  for (float v : img.pixels) m_in += v;
  for (float v : out.pixels) m_out += v;
  m_in /= static_cast<double>(img.pixels.size());
  m_out /= static_cast<double>(out.pixels.size());
  CHECK(m_out == doctest::Approx(2 * m_in - 1).epsilon(1e-5));
}

TEST_CASE("bilinear_resize same size is the identity") {
  Image img = make_noise_image(11, 13, 9);
  Image out = bilinear_resize(img, 11, 13);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("bilinear_resize keeps constants constant") {
  Image img(5, 7, 0.37f);
  for (auto [w, h] : {std::pair{3, 3}, {9, 2}, {16, 16}}) {
    Image out = bilinear_resize(img, w, h);
    for (float v : out.pixels) CHECK(v == 0.37f);
  }
}

TEST_CASE("bilinear_resize checkerboard center lands on 0.5") {
  Image img = quad2x2(0, 1, 1, 0);
  Image out = bilinear_resize(img, 3, 3);
  CHECK(out.at(1, 1)[0] == doctest::Approx(0.5f));
}

TEST_CASE("augment_sample with all stages disabled is rng independent") {
  AugmentConfig cfg;
  cfg.scale_crop = cfg.rotation = cfg.jitter = cfg.flip = false;
  cfg.target_size = 16;
  Image src = make_noise_image(40, 24, 10);
  SampleRng r1(123, 0), r2(77, 99);
  Image a = augment_sample(src, r1, cfg);
  Image b = augment_sample(src, r2, cfg);
  CHECK(a.pixels == b.pixels);
  CHECK(a.width == 16);
  CHECK(a.height == 16);
}

TEST_CASE("augment_sample is a pure function of (source, seed, index, cfg)") {
  AugmentConfig cfg;
  Image src = make_noise_image(60, 50, 11);
  SampleRng r1(42, 7), r2(42, 7), r3(42, 8);
  Image a = augment_sample(src, r1, cfg);
  Image b = augment_sample(src, r2, cfg);
  Image c = augment_sample(src, r3, cfg);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("augment_sample at protocol defaults lands in [-1,1] at S=32") {
  AugmentConfig cfg;  // beta 1e-3, gamma 0.75, rot 35, jitter (0.6,1.4), hue 0.1, S=32
  Image src = make_noise_image(128, 96, 12);
  for (int i = 0; i < 64; ++i) {
    SampleRng rng(9, static_cast<uint64_t>(i));
    Image out = augment_sample(src, rng, cfg);
    CHECK(out.width == 32);
    CHECK(out.height == 32);
    for (float v : out.pixels) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
      CHECK(!std::isnan(v));
    }
  }
}

TEST_CASE("augment config validation names the field") {
  AugmentConfig cfg;
  cfg.beta = 1.5;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("augment.beta"), ValidationError);
  cfg.beta = 0.5;
  cfg.hue_range = 0.6;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("augment.hue_range"), ValidationError);
}
