#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sr4ir/imaging.hpp"
#include "sr4ir/rng.hpp"

using namespace sr4ir;

namespace {

ImageBatch random_image(uint64_t seed, int b, int h, int w, float lo = 0.f, float hi = 1.f) {
  Rng rng(seed);
  Tensor<float> t(Shape{b, 3, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = float(rng.uniform(lo, hi));
  return ImageBatch(std::move(t), Role::HR);
}

ImageBatch flip_h(const ImageBatch& img) {
  Tensor<float> out(img.t.shape());
  const int h = img.height(), w = img.width();
  for (int p = 0; p < img.batch() * 3; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.data()[(size_t(p) * h + y) * w + x] =
            img.t.data()[(size_t(p) * h + y) * w + (w - 1 - x)];
  return ImageBatch(std::move(out), img.role);
}

// straightforward two-pass weighted-sum resampler (Catmull-Rom a=-0.5,
// edge clamp), independent of the production kernel
float cubic(float a, float x) {
  x = std::abs(x);
  if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0;
}

ImageBatch bicubic_oracle(const ImageBatch& img, int scale) {
  const int h = img.height(), w = img.width();
  const int ho = h / scale, wo = w / scale;
  const float a = -0.5f;
  const auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  Tensor<float> out(Shape{img.batch(), 3, ho, wo});
  for (int p = 0; p < img.batch() * 3; ++p) {
    // horizontal then vertical
    std::vector<double> tmp(size_t(h) * wo, 0.0);
    for (int y = 0; y < h; ++y)
      for (int ox = 0; ox < wo; ++ox) {
        const double src = (ox + 0.5) * scale - 0.5;
        const int base = int(std::floor(src));
        double acc = 0;
        for (int tap = -1; tap <= 2; ++tap)
          acc += double(cubic(a, float(src - (base + tap)))) *
                 img.t.data()[(size_t(p) * h + y) * w + clampi(base + tap, w)];
        tmp[size_t(y) * wo + ox] = acc;
      }
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const double src = (oy + 0.5) * scale - 0.5;
        const int base = int(std::floor(src));
        double acc = 0;
        for (int tap = -1; tap <= 2; ++tap)
          acc += double(cubic(a, float(src - (base + tap)))) *
                 tmp[size_t(clampi(base + tap, h)) * wo + ox];
        out.data()[(size_t(p) * ho + oy) * wo + ox] = float(acc);
      }
  }
  return ImageBatch(std::move(out), Role::LR);
}

}  // namespace

TEST_SUITE_BEGIN("imaging");

TEST_CASE("bicubic constant preservation and identity") {
  ImageBatch c(Tensor<float>::full({1, 3, 8, 8}, 0.37f), Role::HR);
  ImageBatch down = bicubic_downsample(c, 4);
  for (int64_t i = 0; i < down.t.numel(); ++i)
    CHECK(down.t.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));

  ImageBatch same = bicubic_downsample(c, 1);
  for (int64_t i = 0; i < c.t.numel(); ++i) CHECK(same.t.data()[i] == c.t.data()[i]);

  CHECK_THROWS_WITH_AS(bicubic_downsample(random_image(1, 1, 6, 6), 4),
                       doctest::Contains("not divisible"), std::runtime_error);
}

TEST_CASE("bicubic matches two-pass weighted-sum oracle") {
  // 8x8 horizontal ramp, scale 4
  Tensor<float> ramp(Shape{1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) ramp.data()[(size_t(c) * 8 + y) * 8 + x] = float(x) / 7.f;
  ImageBatch img(std::move(ramp), Role::HR);
  ImageBatch got = bicubic_downsample(img, 4);
  ImageBatch want = bicubic_oracle(img, 4);
  REQUIRE(got.t.shape() == want.t.shape());
  for (int64_t i = 0; i < got.t.numel(); ++i)
    CHECK(got.t.data()[i] == doctest::Approx(want.t.data()[i]).epsilon(1e-6));

  // random images, even and odd scales
  for (int scale : {2, 4}) {
    ImageBatch r = random_image(33 + uint64_t(scale), 2, 16, 16);
    ImageBatch g2 = bicubic_downsample(r, scale);
    ImageBatch w2 = bicubic_oracle(r, scale);
    for (int64_t i = 0; i < g2.t.numel(); ++i)
      CHECK(g2.t.data()[i] == doctest::Approx(w2.t.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("bicubic flip equivariance is exact") {
  ImageBatch img = random_image(5, 1, 16, 16);
  ImageBatch a = bicubic_downsample(flip_h(img), 4);
  ImageBatch b = flip_h(bicubic_downsample(img, 4));
  for (int64_t i = 0; i < a.t.numel(); ++i) CHECK(a.t.data()[i] == b.t.data()[i]);
}

TEST_CASE("bilinear upsample") {
  ImageBatch c(Tensor<float>::full({1, 3, 4, 4}, 0.61f), Role::LR);
  ImageBatch up = bilinear_upsample(c, 1);
  for (int64_t i = 0; i < c.t.numel(); ++i) CHECK(up.t.data()[i] == c.t.data()[i]);
  ImageBatch up4 = bilinear_upsample(c, 4);
  for (int64_t i = 0; i < up4.t.numel(); ++i)
    CHECK(up4.t.data()[i] == doctest::Approx(0.61f).epsilon(1e-6));

  // closed-form check: 2x2 -> 4x4, align-corners=false, edge clamp
  Tensor<float> t(Shape{1, 3, 2, 2});
  for (int c2 = 0; c2 < 3; ++c2) {
    t.data()[size_t(c2) * 4 + 0] = 0.f;
    t.data()[size_t(c2) * 4 + 1] = 1.f;
    t.data()[size_t(c2) * 4 + 2] = 0.f;
    t.data()[size_t(c2) * 4 + 3] = 1.f;
  }
  ImageBatch cols(std::move(t), Role::LR);
  ImageBatch up2 = bilinear_upsample(cols, 2);
  // source x coords for outputs 0..3 are -0.25, 0.25, 0.75, 1.25 ->
  // values 0, 0.25, 0.75, 1 on every row
  const float want[4] = {0.f, 0.25f, 0.75f, 1.f};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(up2.t.data()[size_t(y) * 4 + x] == doctest::Approx(want[x]).epsilon(1e-6));
}

TEST_CASE("gaussian blur") {
  ImageBatch img = random_image(9, 1, 12, 12);
  ImageBatch same = gaussian_blur(img, 0.0);
  for (int64_t i = 0; i < img.t.numel(); ++i) CHECK(same.t.data()[i] == img.t.data()[i]);

  ImageBatch c(Tensor<float>::full({1, 3, 12, 12}, 0.25f), Role::HR);
  ImageBatch b = gaussian_blur(c, 1.7);
  for (int64_t i = 0; i < b.t.numel(); ++i)
    CHECK(b.t.data()[i] == doctest::Approx(0.25f).epsilon(1e-6));

  // impulse: center row equals the separable normalized Gaussian weights
  const int radius = 3;  // ceil(3 * 1.0)
  Tensor<float> imp(Shape{1, 3, 15, 15});
  imp.data()[size_t(7) * 15 + 7] = 1.f;  // channel 0 center
  ImageBatch blurred = gaussian_blur(ImageBatch(std::move(imp), Role::HR), 1.0);
  double wsum = 0;
  for (int d = -radius; d <= radius; ++d) wsum += std::exp(-0.5 * d * d);
  for (int d = -radius; d <= radius; ++d) {
    const double want = (std::exp(-0.5 * d * d) / wsum) * (1.0 / wsum);
    CHECK(blurred.t.data()[size_t(7) * 15 + 7 + d] == doctest::Approx(want).epsilon(1e-5));
  }

  // mean preservation per channel on a constant-padded test image
  Tensor<float> t(Shape{1, 3, 16, 16});
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.4f;
  Rng rng(10);
  for (int c2 = 0; c2 < 3; ++c2)
    for (int y = 6; y < 10; ++y)
      for (int x = 6; x < 10; ++x)
        t.data()[(size_t(c2) * 16 + y) * 16 + x] = float(rng.uniform(0.0, 1.0));
  ImageBatch padded(std::move(t), Role::HR);
  ImageBatch blurred2 = gaussian_blur(padded, 1.0);
  for (int c2 = 0; c2 < 3; ++c2) {
    double m0 = 0, m1 = 0;
    for (int i = 0; i < 256; ++i) {
      m0 += padded.t.data()[size_t(c2) * 256 + i];
      m1 += blurred2.t.data()[size_t(c2) * 256 + i];
    }
    CHECK(m1 / 256 == doctest::Approx(m0 / 256).epsilon(1e-5));
  }

  CHECK_THROWS(gaussian_blur(img, -0.1));
}

TEST_CASE("psnr") {
  ImageBatch a = random_image(21, 2, 8, 8);
  CHECK(std::isinf(psnr(a, a)));

  // uniform difference of exactly 0.1 -> 20 dB
  Tensor<float> t(Shape{1, 3, 4, 4});
  Tensor<float> u(Shape{1, 3, 4, 4});
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.data()[i] = 0.5f;
    u.data()[i] = 0.6f;
  }
  CHECK(psnr(ImageBatch(t, Role::HR), ImageBatch(u, Role::HR)) ==
        doctest::Approx(20.0).epsilon(1e-5));

  // random pair vs loop oracle, and symmetry
  ImageBatch b = random_image(22, 2, 8, 8);
  double mse = 0;
  for (int64_t i = 0; i < a.t.numel(); ++i) {
    const double d = double(a.t.data()[i]) - b.t.data()[i];
    mse += d * d;
  }
  mse /= double(a.t.numel());
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-6));
  CHECK(psnr(a, b) == psnr(b, a));
}

TEST_CASE("ppm round trip") {
  namespace fs = std::filesystem;
  const std::string dir = "test_ppm_out";
  fs::create_directories(dir);

  // write-then-read quantization bound
  ImageBatch img = random_image(31, 1, 6, 5);
  ppm_write(img, dir + "/a.ppm");
  ImageBatch back = ppm_read(dir + "/a.ppm");
  REQUIRE(back.t.shape() == img.t.shape());
  for (int64_t i = 0; i < img.t.numel(); ++i)
    CHECK(std::abs(back.t.data()[i] - img.t.data()[i]) <= 1.f / 510.f + 1e-7f);

  // read-then-write is idempotent on the 1/255 grid
  ppm_write(back, dir + "/b.ppm");
  ImageBatch again = ppm_read(dir + "/b.ppm");
  for (int64_t i = 0; i < back.t.numel(); ++i) CHECK(again.t.data()[i] == back.t.data()[i]);

  // all-black and all-white round-trip exactly
  for (float v : {0.f, 1.f}) {
    ImageBatch flat(Tensor<float>::full({1, 3, 3, 3}, v), Role::HR);
    ppm_write(flat, dir + "/c.ppm");
    ImageBatch rb = ppm_read(dir + "/c.ppm");
    for (int64_t i = 0; i < rb.t.numel(); ++i) CHECK(rb.t.data()[i] == v);
  }

  // 2x1 image (0.5, 1.0) -> bytes 128,128,128,255,255,255 after the header
  Tensor<float> px(Shape{1, 3, 1, 2});
  for (int c = 0; c < 3; ++c) {
    px.data()[size_t(c) * 2 + 0] = 0.5f;
    px.data()[size_t(c) * 2 + 1] = 1.0f;
  }
  ppm_write(ImageBatch(std::move(px), Role::HR), dir + "/d.ppm");
  std::ifstream f(dir + "/d.ppm", std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  REQUIRE(all.size() >= 6);
  const auto* bytes = reinterpret_cast<const unsigned char*>(all.data() + all.size() - 6);
  CHECK(bytes[0] == 128);
  CHECK(bytes[1] == 128);
  CHECK(bytes[2] == 128);
  CHECK(bytes[3] == 255);
  CHECK(bytes[4] == 255);
  CHECK(bytes[5] == 255);

  // malformed header and truncated payload are explicit errors
  {
    std::ofstream bad(dir + "/bad.ppm", std::ios::binary);
    bad << "P5\n2 2\n255\n";
  }
  CHECK_THROWS_WITH_AS(ppm_read(dir + "/bad.ppm"), doctest::Contains("malformed"),
                       std::runtime_error);
  {
    std::ofstream trunc(dir + "/trunc.ppm", std::ios::binary);
    trunc << "P6\n4 4\n255\n";
    trunc << "abc";
  }
  CHECK_THROWS_WITH_AS(ppm_read(dir + "/trunc.ppm"), doctest::Contains("truncated"),
                       std::runtime_error);

  fs::remove_all(dir);
}

TEST_SUITE_END();
