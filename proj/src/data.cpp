#include "sr4ir/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sr4ir/rng.hpp"

namespace sr4ir {

std::vector<int> DatasetSpec::periods() const {
  if (!stripe_periods.empty()) return stripe_periods;
  // long and short periods interleaved: class 0 gets the longest (coarse,
  // survives downsampling), class 1 the shortest (destroyed by it)
  static const std::vector<int> defaults = {16, 3, 12, 4, 10, 5, 8, 6, 14, 7, 15, 9, 13, 11};
  check(num_classes <= int(defaults.size()),
        "dataset: no default stripe periods for " + std::to_string(num_classes) + " classes");
  return {defaults.begin(), defaults.begin() + num_classes};
}

void DatasetSpec::validate() const {
  check(num_classes >= 2, "dataset: need at least 2 classes");
  check(image_size >= 8, "dataset: image_size too small");
  check(train_count >= 1 && test_count >= 1, "dataset: empty split");
  check(image_size % degradation.scale == 0,
        "dataset: image_size " + std::to_string(image_size) + " not divisible by scale " +
            std::to_string(degradation.scale));
  check(degradation.blur_std >= 0.0, "dataset: negative blur_std");
  const std::vector<int> p = periods();
  check(int(p.size()) == num_classes, "dataset: stripe_periods must list one period per class");
  std::vector<int> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  check(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
        "dataset: stripe periods must be distinct per class");
  check(sorted.front() >= 2, "dataset: stripe periods must be >= 2 pixels");
  if (degradation.scale >= 2)
    check(sorted.front() < 2 * degradation.scale,
          "dataset: shortest stripe period must be below 2*scale so that "
          "downsampling destroys it");
}

namespace {

void hue_to_rgb(double hue, double sat, double val, float rgb[3]) {
  const double h = std::fmod(hue, 1.0) * 6.0;
  const int i = int(h);
  const double f = h - i;
  const double p = val * (1.0 - sat);
  const double q = val * (1.0 - sat * f);
  const double t = val * (1.0 - sat * (1.0 - f));
  double r, g, b;
  switch (i % 6) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  rgb[0] = float(r), rgb[1] = float(g), rgb[2] = float(b);
}

constexpr double kOrientations[4] = {0.0, M_PI / 4, M_PI / 2, 3 * M_PI / 4};

}  // namespace

Sample gen_sample(const DatasetSpec& spec, int index, uint64_t split_seed) {
  spec.validate();
  const int S = spec.image_size;
  const uint64_t seed = stream_seed(split_seed, "sample", uint64_t(index));
  Rng rng(seed);

  // background: muted color from an evenly spaced palette + jitter
  const int bg_bucket = int(rng.below(uint32_t(spec.num_classes)));
  float bg[3];
  hue_to_rgb(double(bg_bucket) / spec.num_classes + 0.03, 0.30, 0.70, bg);
  for (float& v : bg) v = std::min(1.f, std::max(0.f, v + float(rng.uniform(-0.06, 0.06))));

  const bool disk = rng.below(2) == 0;
  const double area = rng.uniform(0.28, 0.47);

  const int texture_class = int(rng.below(uint32_t(spec.num_classes)));
  const double period = double(spec.periods()[size_t(texture_class)]);
  const double theta =
      kOrientations[rng.below(4)] + rng.uniform(-0.08, 0.08);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double amp = rng.uniform(0.22, 0.42);

  float fill[3];
  for (float& v : fill) v = float(rng.uniform(0.25, 0.75));

  // geometry; shapes are placed fully inside the frame
  double half;  // radius (disk) or half side (square)
  if (disk)
    half = std::sqrt(area * S * S / M_PI);
  else
    half = std::sqrt(area * S * S) / 2.0;
  const double cx = rng.uniform(half, S - 1 - half);
  const double cy = rng.uniform(half, S - 1 - half);

  Tensor<float> img(Shape{1, 3, S, S});
  IntTensor seg(Shape{S, S}, std::vector<int32_t>(size_t(S) * S, 0));
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      bool inside;
      if (disk) {
        const double dx = x - cx, dy = y - cy;
        inside = dx * dx + dy * dy <= half * half;
      } else {
        inside = std::abs(x - cx) <= half && std::abs(y - cy) <= half;
      }
      if (inside) {
        const double u = ct * x + st * y;
        const float s = float(amp * std::sin(2.0 * M_PI * u / period + phase));
        for (int c = 0; c < 3; ++c) {
          const float v = fill[c] + s;
          img.data()[(size_t(c) * S + y) * S + x] = std::min(1.f, std::max(0.f, v));
        }
        seg.data[size_t(y) * S + x] = texture_class + 1;
      } else {
        for (int c = 0; c < 3; ++c) img.data()[(size_t(c) * S + y) * S + x] = bg[c];
      }
    }
  }

  Sample out;
  out.hr = ImageBatch(std::move(img), Role::HR);
  out.label = spec.label_mode == LabelMode::texture ? texture_class : bg_bucket;
  out.seg = std::move(seg);
  out.seed = seed;
  return out;
}

std::pair<ImageBatch, ImageBatch> make_pair(const ImageBatch& hr, const DegradationConfig& deg) {
  ImageBatch degraded = hr;
  if (deg.blur_std > 0.0) degraded = gaussian_blur(degraded, deg.blur_std);
  ImageBatch lr = clamp01(bicubic_downsample(degraded, deg.scale));
  return {lr, hr};
}

std::vector<std::vector<int>> epoch_batches(int count, int batch_size, bool drop_last,
                                            uint64_t epoch_seed) {
  check(count >= 1, "epoch_batches: empty split");
  check(batch_size >= 1 && batch_size <= count, "epoch_batches: batch_size must be in [1,count]");
  std::vector<int> order(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) order[size_t(i)] = i;
  Rng rng(epoch_seed);
  for (int i = count - 1; i > 0; --i)
    std::swap(order[size_t(i)], order[rng.below(uint32_t(i + 1))]);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < count; start += batch_size) {
    const int end = std::min(count, start + batch_size);
    if (drop_last && end - start < batch_size) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

SplitCache::SplitCache(const DatasetSpec& spec, int count, uint64_t split_seed) {
  spec.validate();
  count_ = count;
  const int S = spec.image_size;
  const int s = S / spec.degradation.scale;
  hr_size_ = 3 * S * S;
  lr_size_ = 3 * s * s;
  hr_.resize(size_t(count) * hr_size_);
  lr_.resize(size_t(count) * lr_size_);
  labels_.resize(size_t(count));
  seg_.resize(size_t(count) * S * S);
  for (int i = 0; i < count; ++i) {
    Sample sample = gen_sample(spec, i, split_seed);
    auto [lr, hr] = make_pair(sample.hr, spec.degradation);
    std::copy(hr.t.data(), hr.t.data() + hr_size_, hr_.begin() + size_t(i) * hr_size_);
    std::copy(lr.t.data(), lr.t.data() + lr_size_, lr_.begin() + size_t(i) * lr_size_);
    labels_[size_t(i)] = sample.label;
    std::copy(sample.seg.data.begin(), sample.seg.data.end(), seg_.begin() + size_t(i) * S * S);
  }
}

Batch SplitCache::gather(const std::vector<int>& indices, TaskKind task) const {
  check(!indices.empty(), "gather: empty batch");
  const int B = int(indices.size());
  const int hr_hw = hr_size_ / 3;
  const int lr_hw = lr_size_ / 3;
  const int S = int(std::lround(std::sqrt(double(hr_hw))));
  const int s = int(std::lround(std::sqrt(double(lr_hw))));
  Batch out;
  out.indices = indices;
  out.hr = Tensor<float>(Shape{B, 3, S, S});
  out.lr = Tensor<float>(Shape{B, 3, s, s});
  for (int b = 0; b < B; ++b) {
    const int i = indices[size_t(b)];
    check(i >= 0 && i < count_, "gather: index out of range");
    std::copy(hr_.begin() + size_t(i) * hr_size_, hr_.begin() + size_t(i + 1) * hr_size_,
              out.hr.data() + size_t(b) * hr_size_);
    std::copy(lr_.begin() + size_t(i) * lr_size_, lr_.begin() + size_t(i + 1) * lr_size_,
              out.lr.data() + size_t(b) * lr_size_);
  }
  if (task == TaskKind::classification) {
    std::vector<int32_t> lab(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) lab[size_t(b)] = labels_[size_t(indices[size_t(b)])];
    out.labels = IntTensor(Shape{B}, std::move(lab));
  } else {
    std::vector<int32_t> lab(size_t(B) * S * S);
    for (int b = 0; b < B; ++b)
      std::copy(seg_.begin() + size_t(indices[size_t(b)]) * S * S,
                seg_.begin() + size_t(indices[size_t(b)] + 1) * S * S,
                lab.begin() + size_t(b) * S * S);
    out.labels = IntTensor(Shape{B, S, S}, std::move(lab));
  }
  return out;
}

int dump_dataset(const DatasetSpec& spec, const std::string& dir, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  check(manifest.good(), "dump_dataset: cannot write manifest in " + dir);
  int written = 0;
  for (const auto& [split, count] :
       {std::pair<std::string, int>{"train", spec.train_count}, {"test", spec.test_count}}) {
    fs::create_directories(dir + "/" + split);
    const uint64_t split_seed = stream_seed(seed, split);
    for (int i = 0; i < count; ++i) {
      Sample sample = gen_sample(spec, i, split_seed);
      const std::string rel = split + "/" + std::to_string(i) + ".ppm";
      ppm_write(sample.hr, dir + "/" + rel);
      manifest << i << " " << sample.label << " " << rel << "\n";
      ++written;
    }
  }
  check(manifest.good(), "dump_dataset: manifest write failed");
  return written;
}

}  // namespace sr4ir
