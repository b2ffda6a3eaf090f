#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sr4ir/data.hpp"
#include "sr4ir/rng.hpp"

using namespace sr4ir;

namespace {

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.num_classes = 8;
  spec.image_size = 64;
  spec.train_count = 16;
  spec.test_count = 8;
  spec.degradation.scale = 4;
  return spec;
}

// mean spectral magnitude above the LR-representable band (HR Nyquist / 4
// for scale 4), via a direct DFT on pure stripe patches
double high_freq_energy(const DatasetSpec& spec, int cls, int trials) {
  const int S = 32;
  const double cut = 0.5 / 4.0;  // cycles per pixel
  double total = 0;
  Rng rng(555 + uint64_t(cls));
  for (int t = 0; t < trials; ++t) {
    const double period = spec.periods()[size_t(cls)];
    const double theta = (t % 4) * M_PI / 4.0;
    const double phase = rng.uniform(0.0, 2 * M_PI);
    std::vector<double> patch(size_t(S) * S);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        patch[size_t(y) * S + x] =
            0.3 * std::sin(2 * M_PI * (std::cos(theta) * x + std::sin(theta) * y) / period + phase);
    double energy = 0;
    for (int fy = 0; fy < S; ++fy)
      for (int fx = 0; fx < S; ++fx) {
        const double fxn = fx <= S / 2 ? double(fx) / S : double(fx - S) / S;
        const double fyn = fy <= S / 2 ? double(fy) / S : double(fy - S) / S;
        if (std::sqrt(fxn * fxn + fyn * fyn) <= cut) continue;
        double re = 0, im = 0;
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x) {
            const double ang = -2 * M_PI * (double(fx) * x + double(fy) * y) / S;
            re += patch[size_t(y) * S + x] * std::cos(ang);
            im += patch[size_t(y) * S + x] * std::sin(ang);
          }
        energy += re * re + im * im;
      }
    total += energy;
  }
  return total / trials;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("spec validation") {
  DatasetSpec spec = small_spec();
  spec.validate();
  CHECK(spec.periods().size() == 8);

  DatasetSpec dup = spec;
  dup.stripe_periods = {3, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("distinct"), std::runtime_error);

  DatasetSpec coarse = spec;
  coarse.stripe_periods = {16, 15, 14, 13, 12, 11, 10, 9};
  CHECK_THROWS_WITH_AS(coarse.validate(), doctest::Contains("below 2*scale"),
                       std::runtime_error);

  DatasetSpec odd = spec;
  odd.image_size = 66;
  CHECK_THROWS_WITH_AS(odd.validate(), doctest::Contains("divisible"), std::runtime_error);
}

TEST_CASE("gen_sample determinism and geometry") {
  const DatasetSpec spec = small_spec();
  const uint64_t split_seed = 12345;
  for (int i = 0; i < 12; ++i) {
    Sample a = gen_sample(spec, i, split_seed);
    Sample b = gen_sample(spec, i, split_seed);
    CHECK(a.hr.t.checksum() == b.hr.t.checksum());
    CHECK(a.label == b.label);
    CHECK(a.label >= 0);
    CHECK(a.label < spec.num_classes);

    // segmentation foreground fraction within [0.25, 0.50]
    int64_t fg = 0;
    for (int32_t v : a.seg.data) fg += v > 0 ? 1 : 0;
    const double frac = double(fg) / double(a.seg.numel());
    CHECK(frac >= 0.25);
    CHECK(frac <= 0.50);

    // seg ids match the texture class everywhere inside the shape
    for (int32_t v : a.seg.data)
      if (v > 0) CHECK(v == a.label + 1);
  }

  // different split seeds give different streams
  Sample c = gen_sample(spec, 0, split_seed);
  Sample d = gen_sample(spec, 0, split_seed + 1);
  CHECK(c.hr.t.checksum() != d.hr.t.checksum());
}

TEST_CASE("background labeling relabels the identical images") {
  DatasetSpec tex = small_spec();
  DatasetSpec bg = tex;
  bg.label_mode = LabelMode::background;
  bool labels_differ = false;
  for (int i = 0; i < 16; ++i) {
    Sample a = gen_sample(tex, i, 77);
    Sample b = gen_sample(bg, i, 77);
    CHECK(a.hr.t.checksum() == b.hr.t.checksum());
    labels_differ = labels_differ || a.label != b.label;
  }
  CHECK(labels_differ);
}

TEST_CASE("class frequency separability oracle") {
  // classes are separable only via frequencies the LR grid cannot represent:
  // class 1 (shortest period) carries > 3x the above-band energy of class 0
  const DatasetSpec spec = small_spec();
  const double e0 = high_freq_energy(spec, 0, 4);
  const double e1 = high_freq_energy(spec, 1, 4);
  CHECK(e1 > 3.0 * e0);
}

TEST_CASE("make_pair order and degenerate cases") {
  const DatasetSpec spec = small_spec();
  Sample s = gen_sample(spec, 3, 99);

  DegradationConfig identity{1, 0.0};
  auto [lr_id, hr_id] = make_pair(s.hr, identity);
  CHECK(lr_id.t.checksum() == hr_id.t.checksum());

  DegradationConfig plain{4, 0.0};
  auto [lr, hr] = make_pair(s.hr, plain);
  CHECK(lr.height() * 4 == hr.height());
  CHECK(lr.role == Role::LR);

  // blur-then-downsample differs from downsample-then-blur on an impulse
  Tensor<float> imp(Shape{1, 3, 16, 16});
  for (int c = 0; c < 3; ++c) imp.data()[(size_t(c) * 16 + 8) * 16 + 8] = 1.f;
  ImageBatch impulse(std::move(imp), Role::HR);
  DegradationConfig blurred{2, 1.0};
  auto [lr_a, hr_a] = make_pair(impulse, blurred);
  ImageBatch swapped = clamp01(gaussian_blur(bicubic_downsample(impulse, 2), 1.0));
  bool differ = false;
  for (int64_t i = 0; i < lr_a.t.numel() && !differ; ++i)
    differ = lr_a.t.data()[i] != swapped.t.data()[i];
  CHECK(differ);

  // constant stays constant
  ImageBatch c(Tensor<float>::full({1, 3, 16, 16}, 0.5f), Role::HR);
  auto [clr, chr] = make_pair(c, plain);
  for (int64_t i = 0; i < clr.t.numel(); ++i)
    CHECK(clr.t.data()[i] == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("epoch_batches is a deterministic permutation") {
  auto a = epoch_batches(23, 4, true, 42);
  auto b = epoch_batches(23, 4, true, 42);
  CHECK(a == b);
  auto c = epoch_batches(23, 4, true, 43);
  CHECK(a != c);

  // drop_last drops the partial batch in training
  CHECK(a.size() == 5);
  for (const auto& batch : a) CHECK(batch.size() == 4);

  // evaluation keeps every index exactly once
  auto full = epoch_batches(23, 4, false, 42);
  std::vector<int> seen;
  for (const auto& batch : full) seen.insert(seen.end(), batch.begin(), batch.end());
  std::sort(seen.begin(), seen.end());
  REQUIRE(seen.size() == 23);
  for (int i = 0; i < 23; ++i) CHECK(seen[size_t(i)] == i);

  CHECK_THROWS(epoch_batches(0, 4, true, 1));
  CHECK_THROWS(epoch_batches(3, 4, true, 1));
}

TEST_CASE("split cache regenerates bit-exactly and batches shapes line up") {
  const DatasetSpec spec = small_spec();
  SplitCache cache1(spec, 8, 31337);
  SplitCache cache2(spec, 8, 31337);
  Batch a = cache1.gather({0, 3, 5}, TaskKind::classification);
  Batch b = cache2.gather({0, 3, 5}, TaskKind::classification);
  CHECK(a.hr.checksum() == b.hr.checksum());
  CHECK(a.lr.checksum() == b.lr.checksum());
  CHECK(a.labels.data == b.labels.data);
  CHECK(a.hr.shape() == (Shape{3, 3, 64, 64}));
  CHECK(a.lr.shape() == (Shape{3, 3, 16, 16}));
  CHECK(a.labels.shape == (Shape{3}));

  Batch seg = cache1.gather({1, 2}, TaskKind::segmentation);
  CHECK(seg.labels.shape == (Shape{2, 64, 64}));
}

TEST_CASE("dump_dataset writes the corpus and manifest") {
  namespace fs = std::filesystem;
  DatasetSpec spec = small_spec();
  spec.train_count = 5;
  spec.test_count = 3;
  const std::string dir = "test_dump_out";
  const int written = dump_dataset(spec, dir, 2024);
  CHECK(written == 8);

  std::ifstream manifest(dir + "/manifest.txt");
  REQUIRE(manifest.good());
  int lines = 0;
  std::string line;
  while (std::getline(manifest, line))
    if (!line.empty()) ++lines;
  CHECK(lines == spec.train_count + spec.test_count);

  // manifest-listed files exist and parse as PPM
  ImageBatch img = ppm_read(dir + "/train/0.ppm");
  CHECK(img.height() == 64);
  fs::remove_all(dir);
}

TEST_SUITE_END();
