#include "sr4ir/imaging.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "sr4ir/kernels.hpp"

namespace sr4ir {

const char* role_name(Role r) {
  switch (r) {
    case Role::HR: return "HR";
    case Role::LR: return "LR";
    case Role::SR: return "SR";
    case Role::AUG: return "AUG";
  }
  return "?";
}

ImageBatch::ImageBatch(Tensor<float> tensor, Role r) : t(std::move(tensor)), role(r) {
  check(t.ndim() == 4 && t.dim(1) == 3,
        "image batch: tensor must be [B,3,H,W], got " + shape_str(t.shape()));
}

ImageBatch bicubic_downsample(const ImageBatch& img, int scale) {
  check(scale >= 1, "bicubic_downsample: scale must be >= 1");
  check(img.height() % scale == 0 && img.width() % scale == 0,
        "bicubic_downsample: extents " + std::to_string(img.height()) + "x" +
            std::to_string(img.width()) + " not divisible by scale " + std::to_string(scale));
  Tensor<float> out(Shape{img.batch(), 3, img.height() / scale, img.width() / scale});
  kern::bicubic_down(img.batch(), 3, img.height(), img.width(), scale, img.t.data(), out.data());
  return ImageBatch(std::move(out), Role::LR);
}

ImageBatch bilinear_upsample(const ImageBatch& img, int scale) {
  check(scale >= 1, "bilinear_upsample: scale must be >= 1");
  Tensor<float> out(Shape{img.batch(), 3, img.height() * scale, img.width() * scale});
  kern::bilinear_up_fwd(img.batch(), 3, img.height(), img.width(), scale, img.t.data(),
                        out.data());
  return ImageBatch(std::move(out), img.role);
}

ImageBatch gaussian_blur(const ImageBatch& img, double stddev) {
  check(stddev >= 0.0, "gaussian_blur: negative std");
  Tensor<float> out(img.t.shape());
  kern::gaussian_blur(img.batch(), 3, img.height(), img.width(), stddev, img.t.data(),
                      out.data());
  return ImageBatch(std::move(out), img.role);
}

ImageBatch clamp01(const ImageBatch& img) {
  Tensor<float> out(img.t.shape());
  const int64_t n = img.t.numel();
  for (int64_t i = 0; i < n; ++i) {
    float v = img.t.data()[i];
    out.data()[i] = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  }
  return ImageBatch(std::move(out), img.role);
}

double psnr(const ImageBatch& a, const ImageBatch& b) {
  check(a.t.shape() == b.t.shape(), "psnr: shape mismatch");
  const int64_t n = a.t.numel();
  double mse = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = double(a.t.data()[i]) - double(b.t.data()[i]);
    mse += d * d;
  }
  mse /= double(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

void ppm_write(const ImageBatch& img, const std::string& path) {
  check(img.batch() == 1, "ppm_write: one image per file");
  const int h = img.height(), w = img.width();
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "ppm_write: cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = img.t.data()[(size_t(c) * h + y) * w + x];
        check(v >= 0.f && v <= 1.f, "ppm_write: value outside [0,1]");
        row[size_t(x) * 3 + c] = (unsigned char)(std::floor(v * 255.f + 0.5f));
      }
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  check(f.good(), "ppm_write: write failed for " + path);
}

namespace {

int ppm_token(std::istream& in) {
  // skips whitespace and '#' comments per the PPM grammar
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

}  // namespace

ImageBatch ppm_read(const std::string& path, Role role) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "ppm_read: cannot open " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  check(m0 == 'P' && m1 == '6', "ppm_read: malformed header (not P6): " + path);
  const int w = ppm_token(f);
  const int h = ppm_token(f);
  const int maxval = ppm_token(f);
  check(w > 0 && h > 0, "ppm_read: malformed header dimensions: " + path);
  check(maxval == 255, "ppm_read: unsupported maxval " + std::to_string(maxval));
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> payload(size_t(w) * h * 3);
  f.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size()));
  check(f.gcount() == std::streamsize(payload.size()), "ppm_read: truncated payload: " + path);
  Tensor<float> t(Shape{1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        t.data()[(size_t(c) * h + y) * w + x] = float(payload[(size_t(y) * w + x) * 3 + c]) / 255.f;
  return ImageBatch(std::move(t), role);
}

}  // namespace sr4ir
