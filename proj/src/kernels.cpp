#include "sr4ir/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

// Optimized kernels. Parallel loops are always over disjoint output slices
// (batch, plane or channel granularity) and every output element is reduced
// in a fixed serial order, so results do not depend on the thread count and
// match kern::ref bit-for-bit.

namespace sr4ir::kern {

namespace {
constexpr int kCoTile = 64;
}

template <typename T>
void conv2d_fwd(const Conv2dShape& s, const T* x, const T* w, const T* bias, T* y) {
  if (s.stride != 1) {
    ref::conv2d_fwd(s, x, w, bias, y);
    return;
  }
  const int B = s.b, Ci = s.ci, H = s.h, W = s.w, Co = s.co, K = s.k, pad = s.pad;
  const int Ho = s.ho(), Wo = s.wo();
  for (int co0 = 0; co0 < Co; co0 += kCoTile) {
    const int t = std::min(kCoTile, Co - co0);
    // repack weights as [ci][kh][kw][co] for a vector-friendly inner loop
    std::vector<T> wp(size_t(Ci) * K * K * t);
    for (int ci = 0; ci < Ci; ++ci)
      for (int kh = 0; kh < K; ++kh)
        for (int kw = 0; kw < K; ++kw)
          for (int c = 0; c < t; ++c)
            wp[((size_t(ci) * K + kh) * K + kw) * t + c] =
                w[((size_t(co0) + c) * Ci + ci) * K * K + size_t(kh) * K + kw];
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
      for (int oh = 0; oh < Ho; ++oh) {
        T acc[kCoTile];
        const T* xb = x + size_t(b) * Ci * H * W;
        for (int ow = 0; ow < Wo; ++ow) {
          for (int c = 0; c < t; ++c) acc[c] = bias[co0 + c];
          for (int ci = 0; ci < Ci; ++ci) {
            const T* xp = xb + size_t(ci) * H * W;
            for (int kh = 0; kh < K; ++kh) {
              const int ih = oh - pad + kh;
              if (ih < 0 || ih >= H) continue;
              const T* xrow = xp + size_t(ih) * W;
              const T* wrow = wp.data() + (size_t(ci) * K + kh) * K * t;
              for (int kw = 0; kw < K; ++kw) {
                const int iw = ow - pad + kw;
                if (iw < 0 || iw >= W) continue;
                const T v = xrow[iw];
                const T* __restrict wr = wrow + size_t(kw) * t;
                for (int c = 0; c < t; ++c) acc[c] += v * wr[c];
              }
            }
          }
          T* yp = y + ((size_t(b) * Co + co0) * Ho + oh) * Wo + ow;
          for (int c = 0; c < t; ++c) yp[size_t(c) * Ho * Wo] = acc[c];
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_x(const Conv2dShape& s, const T* w, const T* gy, T* gx) {
  if (s.stride != 1) {
    ref::conv2d_bwd_x(s, w, gy, gx);
    return;
  }
  const int B = s.b, Ci = s.ci, H = s.h, W = s.w, Co = s.co, K = s.k, pad = s.pad;
  const int Ho = s.ho(), Wo = s.wo();
  if (Ci < 16) {
    // few input channels: row-wise axpy into a zeroed plane, summed at the
    // end so the per-element grouping matches the tiled path and the ref
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
      for (int ci = 0; ci < Ci; ++ci) {
        std::vector<T> acc(size_t(H) * W, T(0));
        for (int co = 0; co < Co; ++co) {
          const T* gp = gy + (size_t(b) * Co + co) * Ho * Wo;
          for (int kh = 0; kh < K; ++kh) {
            const int ih_lo = std::max(0, kh - pad);
            const int ih_hi = std::min(H - 1, Ho - 1 + kh - pad);
            for (int kw = 0; kw < K; ++kw) {
              const T wv = w[(size_t(co) * Ci + ci) * K * K + size_t(kh) * K + kw];
              const int iw_lo = std::max(0, kw - pad);
              const int iw_hi = std::min(W - 1, Wo - 1 + kw - pad);
              for (int ih = ih_lo; ih <= ih_hi; ++ih) {
                T* __restrict arow = acc.data() + size_t(ih) * W;
                const T* __restrict grow = gp + size_t(ih + pad - kh) * Wo + pad - kw;
                for (int iw = iw_lo; iw <= iw_hi; ++iw) arow[iw] += wv * grow[iw];
              }
            }
          }
        }
        T* gxp = gx + (size_t(b) * Ci + ci) * H * W;
        for (int64_t i = 0; i < int64_t(H) * W; ++i) gxp[i] += acc[size_t(i)];
      }
    }
    return;
  }
  for (int ci0 = 0; ci0 < Ci; ci0 += kCoTile) {
    const int t = std::min(kCoTile, Ci - ci0);
    // repack as [co][kh][kw][ci]
    std::vector<T> wp(size_t(Co) * K * K * t);
    for (int co = 0; co < Co; ++co)
      for (int kh = 0; kh < K; ++kh)
        for (int kw = 0; kw < K; ++kw)
          for (int c = 0; c < t; ++c)
            wp[((size_t(co) * K + kh) * K + kw) * t + c] =
                w[(size_t(co) * Ci + ci0 + c) * K * K + size_t(kh) * K + kw];
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
      for (int ih = 0; ih < H; ++ih) {
        T acc[kCoTile];
        const T* gyb = gy + size_t(b) * Co * Ho * Wo;
        for (int iw = 0; iw < W; ++iw) {
          for (int c = 0; c < t; ++c) acc[c] = T(0);
          for (int co = 0; co < Co; ++co) {
            const T* gp = gyb + size_t(co) * Ho * Wo;
            for (int kh = 0; kh < K; ++kh) {
              const int oh = ih + pad - kh;
              if (oh < 0 || oh >= Ho) continue;
              const T* grow = gp + size_t(oh) * Wo;
              const T* wrow = wp.data() + (size_t(co) * K + kh) * K * t;
              for (int kw = 0; kw < K; ++kw) {
                const int ow = iw + pad - kw;
                if (ow < 0 || ow >= Wo) continue;
                const T g = grow[ow];
                const T* __restrict wr = wrow + size_t(kw) * t;
                for (int c = 0; c < t; ++c) acc[c] += g * wr[c];
              }
            }
          }
          T* gp = gx + ((size_t(b) * Ci + ci0) * H + ih) * W + iw;
          for (int c = 0; c < t; ++c) gp[size_t(c) * H * W] += acc[c];
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_w(const Conv2dShape& s, const T* x, const T* gy, T* gw) {
  if (s.stride != 1) {
    ref::conv2d_bwd_w(s, x, gy, gw);
    return;
  }
  const int B = s.b, Ci = s.ci, H = s.h, W = s.w, Co = s.co, K = s.k, pad = s.pad;
  const int Ho = s.ho(), Wo = s.wo();
  for (int co0 = 0; co0 < Co; co0 += kCoTile) {
    const int t = std::min(kCoTile, Co - co0);
    // gy tile transposed to channels-last so the co loop vectorizes
    std::vector<T> gt(size_t(B) * Ho * Wo * t);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < t; ++c) {
        const T* src = gy + (size_t(b) * Co + co0 + c) * Ho * Wo;
        T* dst = gt.data() + size_t(b) * Ho * Wo * t + c;
        for (int64_t i = 0; i < int64_t(Ho) * Wo; ++i) dst[size_t(i) * t] = src[i];
      }
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < Ci; ++ci) {
      for (int kh = 0; kh < K; ++kh)
        for (int kw = 0; kw < K; ++kw) {
          T acc[kCoTile];
          for (int c = 0; c < t; ++c) acc[c] = T(0);
          for (int b = 0; b < B; ++b) {
            const T* xp = x + (size_t(b) * Ci + ci) * H * W;
            const T* gb = gt.data() + size_t(b) * Ho * Wo * t;
            const int oh_lo = std::max(0, pad - kh), oh_hi = std::min(Ho, H + pad - kh);
            const int ow_lo = std::max(0, pad - kw), ow_hi = std::min(Wo, W + pad - kw);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const T* xrow = xp + size_t(oh - pad + kh) * W + (ow_lo - pad + kw);
              const T* grow = gb + (size_t(oh) * Wo + ow_lo) * t;
              const int n = ow_hi - ow_lo;
              for (int ow = 0; ow < n; ++ow) {
                const T v = xrow[ow];
                const T* __restrict gr = grow + size_t(ow) * t;
                for (int c = 0; c < t; ++c) acc[c] += v * gr[c];
              }
            }
          }
          for (int c = 0; c < t; ++c)
            gw[((size_t(co0) + c) * Ci + ci) * K * K + size_t(kh) * K + kw] += acc[c];
        }
    }
  }
}

template <typename T>
void conv2d_bwd_b(const Conv2dShape& s, const T* gy, T* gb) {
  const int B = s.b, Co = s.co;
  const int64_t plane = int64_t(s.ho()) * s.wo();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    T acc = T(0);
    for (int b = 0; b < B; ++b) {
      const T* gp = gy + (size_t(b) * Co + co) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += gp[i];
    }
    gb[co] += acc;
  }
}

template <typename T>
void avg_pool_fwd(int b, int c, int h, int w, int k, int stride, const T* x, T* y) {
  const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* xp = x + size_t(p) * h * w;
    T* yp = y + size_t(p) * ho * wo;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        T acc = T(0);
        for (int kh = 0; kh < k; ++kh) {
          const T* row = xp + size_t(oh * stride + kh) * w + ow * stride;
          for (int kw = 0; kw < k; ++kw) acc += row[kw];
        }
        yp[size_t(oh) * wo + ow] = acc / T(k * k);
      }
    }
  }
}

template <typename T>
void avg_pool_bwd(int b, int c, int h, int w, int k, int stride, const T* gy, T* gx) {
  const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* gp = gy + size_t(p) * ho * wo;
    T* gxp = gx + size_t(p) * h * w;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        const T g = gp[size_t(oh) * wo + ow] / T(k * k);
        for (int kh = 0; kh < k; ++kh) {
          T* row = gxp + size_t(oh * stride + kh) * w + ow * stride;
          for (int kw = 0; kw < k; ++kw) row[kw] += g;
        }
      }
    }
  }
}

template <typename T>
void pixel_shuffle_fwd(int b, int c, int r, int h, int w, const T* x, T* y) {
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int bi = p / c, co = p % c;
    const T* xp = x + (size_t(bi) * c * r * r + size_t(co) * r * r) * h * w;
    T* yp = y + size_t(p) * (h * r) * (w * r);
    for (int di = 0; di < r; ++di)
      for (int dj = 0; dj < r; ++dj) {
        const T* src = xp + size_t(di * r + dj) * h * w;
        for (int i = 0; i < h; ++i) {
          T* dst = yp + size_t(r * i + di) * (w * r) + dj;
          for (int j = 0; j < w; ++j) dst[size_t(j) * r] = src[size_t(i) * w + j];
        }
      }
  }
}

template <typename T>
void pixel_shuffle_bwd(int b, int c, int r, int h, int w, const T* gy, T* gx) {
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const int bi = p / c, co = p % c;
    T* gxp = gx + (size_t(bi) * c * r * r + size_t(co) * r * r) * h * w;
    const T* gp = gy + size_t(p) * (h * r) * (w * r);
    for (int di = 0; di < r; ++di)
      for (int dj = 0; dj < r; ++dj) {
        T* dst = gxp + size_t(di * r + dj) * h * w;
        for (int i = 0; i < h; ++i) {
          const T* src = gp + size_t(r * i + di) * (w * r) + dj;
          for (int j = 0; j < w; ++j) dst[size_t(i) * w + j] += src[size_t(j) * r];
        }
      }
  }
}

namespace {

// align-corners=false source offsets: one (index, weight) pair per output site
template <typename T>
void bilinear_axis(int n_in, int scale, std::vector<int>& i0, std::vector<T>& t) {
  const int n_out = n_in * scale;
  i0.resize(n_out);
  t.resize(n_out);
  for (int j = 0; j < n_out; ++j) {
    double src = (j + 0.5) / scale - 0.5;
    double f = std::floor(src);
    int i = int(f);
    double frac = src - f;
    if (i < 0) {
      i = 0;
      frac = 0.0;
    }
    if (i >= n_in - 1) {
      i = n_in - 1;
      frac = 0.0;
    }
    i0[j] = i;
    t[j] = T(frac);
  }
}

}  // namespace

template <typename T>
void bilinear_up_fwd(int b, int c, int h, int w, int scale, const T* x, T* y) {
  const int ho = h * scale, wo = w * scale;
  std::vector<int> yi, xi;
  std::vector<T> yt, xt;
  bilinear_axis<T>(h, scale, yi, yt);
  bilinear_axis<T>(w, scale, xi, xt);
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* xp = x + size_t(p) * h * w;
    T* yp = y + size_t(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const int y0 = yi[oy];
      const int y1 = y0 + 1 < h ? y0 + 1 : y0;
      const T ty = yt[oy];
      const T* r0 = xp + size_t(y0) * w;
      const T* r1 = xp + size_t(y1) * w;
      T* out = yp + size_t(oy) * wo;
      for (int ox = 0; ox < wo; ++ox) {
        const int x0 = xi[ox];
        const int x1 = x0 + 1 < w ? x0 + 1 : x0;
        const T tx = xt[ox];
        const T top = r0[x0] + tx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + tx * (r1[x1] - r1[x0]);
        out[ox] = top + ty * (bot - top);
      }
    }
  }
}

template <typename T>
void bilinear_up_bwd(int b, int c, int h, int w, int scale, const T* gy, T* gx) {
  const int ho = h * scale, wo = w * scale;
  std::vector<int> yi, xi;
  std::vector<T> yt, xt;
  bilinear_axis<T>(h, scale, yi, yt);
  bilinear_axis<T>(w, scale, xi, xt);
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* gp = gy + size_t(p) * ho * wo;
    T* gxp = gx + size_t(p) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      const int y0 = yi[oy];
      const int y1 = y0 + 1 < h ? y0 + 1 : y0;
      const T ty = yt[oy];
      for (int ox = 0; ox < wo; ++ox) {
        const int x0 = xi[ox];
        const int x1 = x0 + 1 < w ? x0 + 1 : x0;
        const T tx = xt[ox];
        const T g = gp[size_t(oy) * wo + ox];
        gxp[size_t(y0) * w + x0] += (T(1) - ty) * (T(1) - tx) * g;
        gxp[size_t(y0) * w + x1] += (T(1) - ty) * tx * g;
        gxp[size_t(y1) * w + x0] += ty * (T(1) - tx) * g;
        gxp[size_t(y1) * w + x1] += ty * tx * g;
      }
    }
  }
}

namespace {

// One horizontal Catmull-Rom pass at integer scale. Even scales sample at a
// constant half-pixel offset; the two symmetric tap pairs are summed pairwise
// so horizontal flips commute with the resampler exactly. Odd scales land on
// grid points (weights 0,1,0,0), i.e. plain decimation.
template <typename T>
void bicubic_pass_h(int h, int w, int scale, const T* src, T* dst) {
  using kern::detail::clamp_index;
  const int wo = w / scale;
  if (scale % 2 == 1) {
    for (int y = 0; y < h; ++y)
      for (int ox = 0; ox < wo; ++ox)
        dst[size_t(y) * wo + ox] = src[size_t(y) * w + ox * scale + scale / 2];
    return;
  }
  const T wa = detail::cubic_w(T(1.5));
  const T wb = detail::cubic_w(T(0.5));
  for (int y = 0; y < h; ++y) {
    const T* row = src + size_t(y) * w;
    T* out = dst + size_t(y) * wo;
    for (int ox = 0; ox < wo; ++ox) {
      const int base = ox * scale + scale / 2 - 1;  // tap of weight wb left of center
      const T xa = row[clamp_index(base - 1, w)];
      const T xb = row[clamp_index(base, w)];
      const T xc = row[clamp_index(base + 1, w)];
      const T xd = row[clamp_index(base + 2, w)];
      out[ox] = wa * (xa + xd) + wb * (xb + xc);
    }
  }
}

template <typename T>
void bicubic_pass_v(int h, int w, int scale, const T* src, T* dst) {
  using kern::detail::clamp_index;
  const int ho = h / scale;
  if (scale % 2 == 1) {
    for (int oy = 0; oy < ho; ++oy)
      for (int x = 0; x < w; ++x)
        dst[size_t(oy) * w + x] = src[size_t(oy * scale + scale / 2) * w + x];
    return;
  }
  const T wa = detail::cubic_w(T(1.5));
  const T wb = detail::cubic_w(T(0.5));
  for (int oy = 0; oy < ho; ++oy) {
    const int base = oy * scale + scale / 2 - 1;
    const T* ra = src + size_t(clamp_index(base - 1, h)) * w;
    const T* rb = src + size_t(clamp_index(base, h)) * w;
    const T* rc = src + size_t(clamp_index(base + 1, h)) * w;
    const T* rd = src + size_t(clamp_index(base + 2, h)) * w;
    T* out = dst + size_t(oy) * w;
    for (int x = 0; x < w; ++x) out[x] = wa * (ra[x] + rd[x]) + wb * (rb[x] + rc[x]);
  }
}

}  // namespace

template <typename T>
void bicubic_down(int b, int c, int h, int w, int scale, const T* x, T* y) {
  const int ho = h / scale, wo = w / scale;
  const int planes = b * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    std::vector<T> tmp(size_t(h) * wo);
    bicubic_pass_h(h, w, scale, x + size_t(p) * h * w, tmp.data());
    bicubic_pass_v(h, wo, scale, tmp.data(), y + size_t(p) * ho * wo);
  }
}

template <typename T>
void gaussian_blur(int b, int c, int h, int w, double stddev, const T* x, T* y) {
  using detail::clamp_index;
  const int64_t plane = int64_t(h) * w;
  const int planes = b * c;
  if (stddev <= 0.0) {
    std::copy(x, x + size_t(planes) * plane, y);
    return;
  }
  const int radius = int(std::ceil(3.0 * stddev));
  std::vector<T> kw(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int d = -radius; d <= radius; ++d) sum += std::exp(-0.5 * d * d / (stddev * stddev));
  for (int d = -radius; d <= radius; ++d)
    kw[size_t(d + radius)] = T(std::exp(-0.5 * d * d / (stddev * stddev)) / sum);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* xp = x + size_t(p) * plane;
    T* yp = y + size_t(p) * plane;
    std::vector<T> tmp(static_cast<size_t>(plane));
    for (int i = 0; i < h; ++i) {
      const T* row = xp + size_t(i) * w;
      T* out = tmp.data() + size_t(i) * w;
      for (int j = 0; j < w; ++j) {
        T acc = T(0);
        for (int d = -radius; d <= radius; ++d)
          acc += kw[size_t(d + radius)] * row[clamp_index(j + d, w)];
        out[j] = acc;
      }
    }
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        T acc = T(0);
        for (int d = -radius; d <= radius; ++d)
          acc += kw[size_t(d + radius)] * tmp[size_t(clamp_index(i + d, h)) * w + j];
        yp[size_t(i) * w + j] = acc;
      }
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

}  // namespace sr4ir::kern
