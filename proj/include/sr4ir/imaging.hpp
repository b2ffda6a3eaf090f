#pragma once

#include <string>

#include "sr4ir/tensor.hpp"

namespace sr4ir {

// Fixed (non-learned) image operators of the data pipeline. Images are RGB
// batches in [0,1]; clamping happens explicitly at pipeline boundaries, not
// inside losses.

enum class Role { HR, LR, SR, AUG };

const char* role_name(Role r);

struct ImageBatch {
  Tensor<float> t;  // [B,3,H,W]
  Role role = Role::HR;

  ImageBatch() = default;
  ImageBatch(Tensor<float> tensor, Role r);

  int batch() const { return t.dim(0); }
  int height() const { return t.dim(2); }
  int width() const { return t.dim(3); }
};

struct DegradationConfig {
  int scale = 4;          // 2, 4 or 8
  double blur_std = 0.0;  // pixels; 0 disables the blur stage
};

// separable Catmull-Rom (a=-0.5), edge clamp; extents must divide by scale
ImageBatch bicubic_downsample(const ImageBatch& img, int scale);

// align-corners=false, edge clamp
ImageBatch bilinear_upsample(const ImageBatch& img, int scale);

// radius ceil(3*std), normalized weights, edge clamp; std=0 is the identity
ImageBatch gaussian_blur(const ImageBatch& img, double stddev);

// clamp to [0,1]; pipeline-boundary helper
ImageBatch clamp01(const ImageBatch& img);

// 10*log10(1/MSE) with peak 1.0; +inf when the images are identical
double psnr(const ImageBatch& a, const ImageBatch& b);

// binary PPM (P6), 8-bit, round half up; single image per file
void ppm_write(const ImageBatch& img, const std::string& path);
ImageBatch ppm_read(const std::string& path, Role role = Role::HR);

}  // namespace sr4ir
