#pragma once

#include <cstdint>

namespace sr4ir::kern {

// Raw dense kernels behind the tensor ops. Two implementations share these
// signatures: the optimized OpenMP-parallel versions in this namespace and
// the plain serial references in kern::ref. Both compute every output element
// with the same per-element accumulation order, so results are bit-identical
// for any thread count; the parity tests assert exactly that.
//
// Backward kernels accumulate (+=) into the gradient buffers.

struct Conv2dShape {
  int b, ci, h, w;  // input  [b, ci, h, w]
  int co, k;        // weight [co, ci, k, k]
  int stride, pad;
  int ho() const { return (h + 2 * pad - k) / stride + 1; }
  int wo() const { return (w + 2 * pad - k) / stride + 1; }
};

template <typename T>
void conv2d_fwd(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv2d_bwd_x(const Conv2dShape& s, const T* w, const T* gy, T* gx);
template <typename T>
void conv2d_bwd_w(const Conv2dShape& s, const T* x, const T* gy, T* gw);
template <typename T>
void conv2d_bwd_b(const Conv2dShape& s, const T* gy, T* gb);

template <typename T>
void avg_pool_fwd(int b, int c, int h, int w, int k, int stride, const T* x, T* y);
template <typename T>
void avg_pool_bwd(int b, int c, int h, int w, int k, int stride, const T* gy, T* gx);

// x: [b, c*r*r, h, w] -> y: [b, c, r*h, r*w]
template <typename T>
void pixel_shuffle_fwd(int b, int c, int r, int h, int w, const T* x, T* y);
template <typename T>
void pixel_shuffle_bwd(int b, int c, int r, int h, int w, const T* gy, T* gx);

// align-corners=false, edge clamp
template <typename T>
void bilinear_up_fwd(int b, int c, int h, int w, int scale, const T* x, T* y);
template <typename T>
void bilinear_up_bwd(int b, int c, int h, int w, int scale, const T* gy, T* gx);

// separable Catmull-Rom (a = -0.5), edge clamp, integer scale
template <typename T>
void bicubic_down(int b, int c, int h, int w, int scale, const T* x, T* y);

// separable Gaussian, radius ceil(3*std), weights normalized, edge clamp
template <typename T>
void gaussian_blur(int b, int c, int h, int w, double stddev, const T* x, T* y);

namespace ref {

template <typename T>
void conv2d_fwd(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv2d_bwd_x(const Conv2dShape& s, const T* w, const T* gy, T* gx);
template <typename T>
void conv2d_bwd_w(const Conv2dShape& s, const T* x, const T* gy, T* gw);
template <typename T>
void conv2d_bwd_b(const Conv2dShape& s, const T* gy, T* gb);
template <typename T>
void avg_pool_fwd(int b, int c, int h, int w, int k, int stride, const T* x, T* y);
template <typename T>
void avg_pool_bwd(int b, int c, int h, int w, int k, int stride, const T* gy, T* gx);
template <typename T>
void pixel_shuffle_fwd(int b, int c, int r, int h, int w, const T* x, T* y);
template <typename T>
void pixel_shuffle_bwd(int b, int c, int r, int h, int w, const T* gy, T* gx);
template <typename T>
void bilinear_up_fwd(int b, int c, int h, int w, int scale, const T* x, T* y);
template <typename T>
void bilinear_up_bwd(int b, int c, int h, int w, int scale, const T* gy, T* gx);
template <typename T>
void bicubic_down(int b, int c, int h, int w, int scale, const T* x, T* y);
template <typename T>
void gaussian_blur(int b, int c, int h, int w, double stddev, const T* x, T* y);

}  // namespace ref

// Shared tap math so both implementations agree bit-for-bit.
namespace detail {

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Catmull-Rom cubic kernel, a = -0.5
template <typename T>
inline T cubic_w(T x) {
  x = x < 0 ? -x : x;
  if (x <= T(1)) return (T(1.5) * x - T(2.5)) * x * x + T(1);
  if (x < T(2)) return ((T(-0.5) * x + T(2.5)) * x - T(4)) * x + T(2);
  return T(0);
}

}  // namespace detail

}  // namespace sr4ir::kern
