#include "sr4ir/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

// Serial reference kernels: straightforward loop nests, one output element at
// a time, no repacking and no parallelism. The optimized kernels are required
// to reproduce these bit-for-bit (see the parity tests); keep the per-element
// accumulation orders here in sync with kernels.cpp.

namespace sr4ir::kern::ref {

using detail::clamp_index;
using detail::cubic_w;

template <typename T>
void conv2d_fwd(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y) {
  const int ho = s.ho(), wo = s.wo();
  for (int b = 0; b < s.b; ++b)
    for (int co = 0; co < s.co; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          T acc = bias[co];
          for (int ci = 0; ci < s.ci; ++ci)
            for (int kh = 0; kh < s.k; ++kh)
              for (int kw = 0; kw < s.k; ++kw) {
                const int ih = oh * s.stride - s.pad + kh;
                const int iw = ow * s.stride - s.pad + kw;
                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                acc += x[((size_t(b) * s.ci + ci) * s.h + ih) * s.w + iw] *
                       w[((size_t(co) * s.ci + ci) * s.k + kh) * s.k + kw];
              }
          y[((size_t(b) * s.co + co) * ho + oh) * wo + ow] = acc;
        }
}

template <typename T>
void conv2d_bwd_x(const Conv2dShape& s, const T* w, const T* gy, T* gx) {
  const int ho = s.ho(), wo = s.wo();
  for (int b = 0; b < s.b; ++b)
    for (int ci = 0; ci < s.ci; ++ci)
      for (int ih = 0; ih < s.h; ++ih)
        for (int iw = 0; iw < s.w; ++iw) {
          T acc = T(0);
          for (int co = 0; co < s.co; ++co)
            for (int kh = 0; kh < s.k; ++kh)
              for (int kw = 0; kw < s.k; ++kw) {
                const int ohs = ih + s.pad - kh;
                const int ows = iw + s.pad - kw;
                if (ohs % s.stride || ows % s.stride) continue;
                const int oh = ohs / s.stride, ow = ows / s.stride;
                if (oh < 0 || oh >= ho || ow < 0 || ow >= wo) continue;
                acc += gy[((size_t(b) * s.co + co) * ho + oh) * wo + ow] *
                       w[((size_t(co) * s.ci + ci) * s.k + kh) * s.k + kw];
              }
          gx[((size_t(b) * s.ci + ci) * s.h + ih) * s.w + iw] += acc;
        }
}

template <typename T>
void conv2d_bwd_w(const Conv2dShape& s, const T* x, const T* gy, T* gw) {
  const int ho = s.ho(), wo = s.wo();
  for (int co = 0; co < s.co; ++co)
    for (int ci = 0; ci < s.ci; ++ci)
      for (int kh = 0; kh < s.k; ++kh)
        for (int kw = 0; kw < s.k; ++kw) {
          T acc = T(0);
          for (int b = 0; b < s.b; ++b)
            for (int oh = 0; oh < ho; ++oh)
              for (int ow = 0; ow < wo; ++ow) {
                const int ih = oh * s.stride - s.pad + kh;
                const int iw = ow * s.stride - s.pad + kw;
                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                acc += x[((size_t(b) * s.ci + ci) * s.h + ih) * s.w + iw] *
                       gy[((size_t(b) * s.co + co) * ho + oh) * wo + ow];
              }
          gw[((size_t(co) * s.ci + ci) * s.k + kh) * s.k + kw] += acc;
        }
}

template <typename T>
void conv2d_bwd_b(const Conv2dShape& s, const T* gy, T* gb) {
  const int64_t plane = int64_t(s.ho()) * s.wo();
  for (int co = 0; co < s.co; ++co) {
    T acc = T(0);
    for (int b = 0; b < s.b; ++b) {
      const T* gp = gy + (size_t(b) * s.co + co) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += gp[i];
    }
    gb[co] += acc;
  }
}

template <typename T>
void avg_pool_fwd(int b, int c, int h, int w, int k, int stride, const T* x, T* y) {
  const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  for (int p = 0; p < b * c; ++p)
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        T acc = T(0);
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw)
            acc += x[size_t(p) * h * w + size_t(oh * stride + kh) * w + ow * stride + kw];
        y[size_t(p) * ho * wo + size_t(oh) * wo + ow] = acc / T(k * k);
      }
}

template <typename T>
void avg_pool_bwd(int b, int c, int h, int w, int k, int stride, const T* gy, T* gx) {
  const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  for (int p = 0; p < b * c; ++p)
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) {
        const T g = gy[size_t(p) * ho * wo + size_t(oh) * wo + ow] / T(k * k);
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw)
            gx[size_t(p) * h * w + size_t(oh * stride + kh) * w + ow * stride + kw] += g;
      }
}

template <typename T>
void pixel_shuffle_fwd(int b, int c, int r, int h, int w, const T* x, T* y) {
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < c; ++co)
      for (int di = 0; di < r; ++di)
        for (int dj = 0; dj < r; ++dj)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              y[((size_t(bi) * c + co) * (h * r) + (r * i + di)) * (w * r) + (r * j + dj)] =
                  x[((size_t(bi) * c * r * r + size_t(co) * r * r + size_t(di) * r + dj) * h + i) * w + j];
}

template <typename T>
void pixel_shuffle_bwd(int b, int c, int r, int h, int w, const T* gy, T* gx) {
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < c; ++co)
      for (int di = 0; di < r; ++di)
        for (int dj = 0; dj < r; ++dj)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              gx[((size_t(bi) * c * r * r + size_t(co) * r * r + size_t(di) * r + dj) * h + i) * w + j] +=
                  gy[((size_t(bi) * c + co) * (h * r) + (r * i + di)) * (w * r) + (r * j + dj)];
}

namespace {

template <typename T>
void bilinear_site(int n_in, int scale, int j, int& i0, T& t) {
  double src = (j + 0.5) / scale - 0.5;
  double f = std::floor(src);
  i0 = int(f);
  double frac = src - f;
  if (i0 < 0) {
    i0 = 0;
    frac = 0.0;
  }
  if (i0 >= n_in - 1) {
    i0 = n_in - 1;
    frac = 0.0;
  }
  t = T(frac);
}

}  // namespace

template <typename T>
void bilinear_up_fwd(int b, int c, int h, int w, int scale, const T* x, T* y) {
  const int ho = h * scale, wo = w * scale;
  for (int p = 0; p < b * c; ++p) {
    const T* xp = x + size_t(p) * h * w;
    T* yp = y + size_t(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        int y0, x0;
        T ty, tx;
        bilinear_site(h, scale, oy, y0, ty);
        bilinear_site(w, scale, ox, x0, tx);
        const int y1 = y0 + 1 < h ? y0 + 1 : y0;
        const int x1 = x0 + 1 < w ? x0 + 1 : x0;
        const T* r0 = xp + size_t(y0) * w;
        const T* r1 = xp + size_t(y1) * w;
        const T top = r0[x0] + tx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + tx * (r1[x1] - r1[x0]);
        yp[size_t(oy) * wo + ox] = top + ty * (bot - top);
      }
  }
}

template <typename T>
void bilinear_up_bwd(int b, int c, int h, int w, int scale, const T* gy, T* gx) {
  const int ho = h * scale, wo = w * scale;
  for (int p = 0; p < b * c; ++p) {
    const T* gp = gy + size_t(p) * ho * wo;
    T* gxp = gx + size_t(p) * h * w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        int y0, x0;
        T ty, tx;
        bilinear_site(h, scale, oy, y0, ty);
        bilinear_site(w, scale, ox, x0, tx);
        const int y1 = y0 + 1 < h ? y0 + 1 : y0;
        const int x1 = x0 + 1 < w ? x0 + 1 : x0;
        const T g = gp[size_t(oy) * wo + ox];
        gxp[size_t(y0) * w + x0] += (T(1) - ty) * (T(1) - tx) * g;
        gxp[size_t(y0) * w + x1] += (T(1) - ty) * tx * g;
        gxp[size_t(y1) * w + x0] += ty * (T(1) - tx) * g;
        gxp[size_t(y1) * w + x1] += ty * tx * g;
      }
  }
}

template <typename T>
void bicubic_down(int b, int c, int h, int w, int scale, const T* x, T* y) {
  const int ho = h / scale, wo = w / scale;
  const T wa = cubic_w(T(1.5));
  const T wb = cubic_w(T(0.5));
  for (int p = 0; p < b * c; ++p) {
    const T* xp = x + size_t(p) * h * w;
    std::vector<T> tmp(size_t(h) * wo);
    for (int yy = 0; yy < h; ++yy)
      for (int ox = 0; ox < wo; ++ox) {
        if (scale % 2 == 1) {
          tmp[size_t(yy) * wo + ox] = xp[size_t(yy) * w + ox * scale + scale / 2];
        } else {
          const int base = ox * scale + scale / 2 - 1;
          const T xa = xp[size_t(yy) * w + clamp_index(base - 1, w)];
          const T xb = xp[size_t(yy) * w + clamp_index(base, w)];
          const T xc = xp[size_t(yy) * w + clamp_index(base + 1, w)];
          const T xd = xp[size_t(yy) * w + clamp_index(base + 2, w)];
          tmp[size_t(yy) * wo + ox] = wa * (xa + xd) + wb * (xb + xc);
        }
      }
    T* yp = y + size_t(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        if (scale % 2 == 1) {
          yp[size_t(oy) * wo + ox] = tmp[size_t(oy * scale + scale / 2) * wo + ox];
        } else {
          const int base = oy * scale + scale / 2 - 1;
          const T xa = tmp[size_t(clamp_index(base - 1, h)) * wo + ox];
          const T xb = tmp[size_t(clamp_index(base, h)) * wo + ox];
          const T xc = tmp[size_t(clamp_index(base + 1, h)) * wo + ox];
          const T xd = tmp[size_t(clamp_index(base + 2, h)) * wo + ox];
          yp[size_t(oy) * wo + ox] = wa * (xa + xd) + wb * (xb + xc);
        }
      }
  }
}

template <typename T>
void gaussian_blur(int b, int c, int h, int w, double stddev, const T* x, T* y) {
  const int64_t plane = int64_t(h) * w;
  if (stddev <= 0.0) {
    std::copy(x, x + size_t(b) * c * plane, y);
    return;
  }
  const int radius = int(std::ceil(3.0 * stddev));
  std::vector<T> kw(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int d = -radius; d <= radius; ++d) sum += std::exp(-0.5 * d * d / (stddev * stddev));
  for (int d = -radius; d <= radius; ++d)
    kw[size_t(d + radius)] = T(std::exp(-0.5 * d * d / (stddev * stddev)) / sum);
  for (int p = 0; p < b * c; ++p) {
    const T* xp = x + size_t(p) * plane;
    T* yp = y + size_t(p) * plane;
    std::vector<T> tmp(static_cast<size_t>(plane));
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        T acc = T(0);
        for (int d = -radius; d <= radius; ++d)
          acc += kw[size_t(d + radius)] * xp[size_t(i) * w + clamp_index(j + d, w)];
        tmp[size_t(i) * w + j] = acc;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        T acc = T(0);
        for (int d = -radius; d <= radius; ++d)
          acc += kw[size_t(d + radius)] * tmp[size_t(clamp_index(i + d, h)) * w + j];
        yp[size_t(i) * w + j] = acc;
      }
  }
}

template void conv2d_fwd<float>(const Conv2dShape&, const float*, const float*, const float*, float*);
template void conv2d_fwd<double>(const Conv2dShape&, const double*, const double*, const double*, double*);
template void conv2d_bwd_x<float>(const Conv2dShape&, const float*, const float*, float*);
template void conv2d_bwd_x<double>(const Conv2dShape&, const double*, const double*, double*);
template void conv2d_bwd_w<float>(const Conv2dShape&, const float*, const float*, float*);
template void conv2d_bwd_w<double>(const Conv2dShape&, const double*, const double*, double*);
template void conv2d_bwd_b<float>(const Conv2dShape&, const float*, float*);
template void conv2d_bwd_b<double>(const Conv2dShape&, const double*, double*);
template void avg_pool_fwd<float>(int, int, int, int, int, int, const float*, float*);
template void avg_pool_fwd<double>(int, int, int, int, int, int, const double*, double*);
template void avg_pool_bwd<float>(int, int, int, int, int, int, const float*, float*);
template void avg_pool_bwd<double>(int, int, int, int, int, int, const double*, double*);
template void pixel_shuffle_fwd<float>(int, int, int, int, int, const float*, float*);
template void pixel_shuffle_fwd<double>(int, int, int, int, int, const double*, double*);
template void pixel_shuffle_bwd<float>(int, int, int, int, int, const float*, float*);
template void pixel_shuffle_bwd<double>(int, int, int, int, int, const double*, double*);
template void bilinear_up_fwd<float>(int, int, int, int, int, const float*, float*);
template void bilinear_up_fwd<double>(int, int, int, int, int, const double*, double*);
template void bilinear_up_bwd<float>(int, int, int, int, int, const float*, float*);
template void bilinear_up_bwd<double>(int, int, int, int, int, const double*, double*);
template void bicubic_down<float>(int, int, int, int, int, const float*, float*);
template void bicubic_down<double>(int, int, int, int, int, const double*, double*);
template void gaussian_blur<float>(int, int, int, int, double, const float*, float*);
template void gaussian_blur<double>(int, int, int, int, double, const double*, double*);

}  // namespace sr4ir::kern::ref
