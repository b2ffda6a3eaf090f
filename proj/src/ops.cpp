#include "sr4ir/ops.hpp"

#include <algorithm>
#include <cmath>

#include "sr4ir/kernels.hpp"

namespace sr4ir {

namespace {

template <typename T>
bool wants_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const Tensor<T>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  const bool rec = wants_grad(tape, {&a, &b});
  Tensor<T> y(a.shape(), rec);
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  if (rec) {
    y.set_node(tape->record({a.node(), b.node()}, [a = a, b = b, y = y]() mutable {
      const T* g = y.grad();
      const int64_t m = y.numel();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < m; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < m; ++i) gb[i] += g[i];
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  const bool rec = wants_grad(tape, {&a, &b});
  Tensor<T> y(a.shape(), rec);
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
  if (rec) {
    y.set_node(tape->record({a.node(), b.node()}, [a = a, b = b, y = y]() mutable {
      const T* g = y.grad();
      const int64_t m = y.numel();
      if (a.requires_grad()) {
        T* ga = a.grad();
        const T* pb2 = b.data();
        for (int64_t i = 0; i < m; ++i) ga[i] += g[i] * pb2[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        const T* pa2 = a.data();
        for (int64_t i = 0; i < m; ++i) gb[i] += g[i] * pa2[i];
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T s) {
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(x.shape(), rec);
  const int64_t n = x.numel();
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = px[i] * s;
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, s]() mutable {
      const T* g = y.grad();
      T* gx = x.grad();
      const int64_t m = y.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * s;
    }));
  }
  return y;
}

template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, T a, T b) {
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(x.shape(), rec);
  const int64_t n = x.numel();
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = a * px[i] + b;
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, a]() mutable {
      const T* g = y.grad();
      T* gx = x.grad();
      const int64_t m = y.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * a;
    }));
  }
  return y;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(Shape{1}, rec);
  double acc = 0.0;
  const T* px = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += double(px[i]);
  y.data()[0] = T(acc);
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y]() mutable {
      const T g = y.grad()[0];
      T* gx = x.grad();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += g;
    }));
  }
  return y;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(x.shape(), rec);
  const int64_t n = x.numel();
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y]() mutable {
      const T* g = y.grad();
      const T* px2 = x.data();
      T* gx = x.grad();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i)
        if (px2[i] > T(0)) gx[i] += g[i];
    }));
  }
  return y;
}

template <typename T>
Tensor<T> clamp01(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(x.shape(), rec);
  const int64_t n = x.numel();
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = std::min(T(1), std::max(T(0), px[i]));
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y]() mutable {
      const T* g = y.grad();
      const T* px2 = x.data();
      T* gx = x.grad();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i)
        if (px2[i] > T(0) && px2[i] < T(1)) gx[i] += g[i];
    }));
  }
  return y;
}

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  check(x.ndim() == 4, "conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  check(w.ndim() == 4 && w.dim(2) == w.dim(3), "conv2d: weight must be [Cout,Cin,k,k]");
  check(w.dim(2) % 2 == 1, "conv2d: kernel size must be odd");
  check(x.dim(1) == w.dim(1), "conv2d: shape mismatch between Cin of input (" +
                                  std::to_string(x.dim(1)) + ") and weight (" +
                                  std::to_string(w.dim(1)) + ")");
  check(b.ndim() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must be [Cout]");
  check(pad >= 0 && stride >= 1, "conv2d: bad stride/pad");
  const kern::Conv2dShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                            w.dim(0), w.dim(2), stride,   pad};
  check(s.h + 2 * pad >= s.k && s.w + 2 * pad >= s.k, "conv2d: kernel larger than padded input");
  check((s.h + 2 * pad - s.k) % stride == 0 && (s.w + 2 * pad - s.k) % stride == 0,
        "conv2d: non-exact output extent");
  const bool rec = wants_grad(tape, {&x, &w, &b});
  Tensor<T> y(Shape{s.b, s.co, s.ho(), s.wo()}, rec);
  kern::conv2d_fwd(s, x.data(), w.data(), b.data(), y.data());
  if (rec) {
    y.set_node(tape->record({x.node(), w.node(), b.node()}, [x = x, w = w, b = b, y = y, s]() mutable {
      const T* gy = y.grad();
      if (x.requires_grad()) kern::conv2d_bwd_x(s, w.data(), gy, x.grad());
      if (w.requires_grad()) kern::conv2d_bwd_w(s, x.data(), gy, w.grad());
      if (b.requires_grad()) kern::conv2d_bwd_b(s, gy, b.grad());
    }));
  }
  return y;
}

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.ndim() == 2, "linear: input must be [B,D]");
  check(w.ndim() == 2 && w.dim(0) == x.dim(1),
        "linear: weight must be [D,K] with D matching input");
  check(b.ndim() == 1 && b.dim(0) == w.dim(1), "linear: bias must be [K]");
  const int B = x.dim(0), D = x.dim(1), K = w.dim(1);
  const bool rec = wants_grad(tape, {&x, &w, &b});
  Tensor<T> y(Shape{B, K}, rec);
  for (int i = 0; i < B; ++i)
    for (int k = 0; k < K; ++k) {
      T acc = b.data()[k];
      for (int d = 0; d < D; ++d) acc += x.data()[size_t(i) * D + d] * w.data()[size_t(d) * K + k];
      y.data()[size_t(i) * K + k] = acc;
    }
  if (rec) {
    y.set_node(tape->record({x.node(), w.node(), b.node()}, [x = x, w = w, b = b, y = y, B, D, K]() mutable {
      const T* g = y.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        for (int i = 0; i < B; ++i)
          for (int d = 0; d < D; ++d) {
            T acc = T(0);
            for (int k = 0; k < K; ++k)
              acc += g[size_t(i) * K + k] * w.data()[size_t(d) * K + k];
            gx[size_t(i) * D + d] += acc;
          }
      }
      if (w.requires_grad()) {
        T* gw = w.grad();
        for (int d = 0; d < D; ++d)
          for (int k = 0; k < K; ++k) {
            T acc = T(0);
            for (int i = 0; i < B; ++i)
              acc += x.data()[size_t(i) * D + d] * g[size_t(i) * K + k];
            gw[size_t(d) * K + k] += acc;
          }
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int k = 0; k < K; ++k) {
          T acc = T(0);
          for (int i = 0; i < B; ++i) acc += g[size_t(i) * K + k];
          gb[k] += acc;
        }
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool2d(Tape<T>* tape, const Tensor<T>& x, int k, int stride) {
  check(x.ndim() == 4, "avg_pool2d: input must be [B,C,H,W]");
  check(k >= 1 && stride >= 1, "avg_pool2d: bad window");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(H >= k && W >= k && (H - k) % stride == 0 && (W - k) % stride == 0,
        "avg_pool2d: window does not tile input exactly");
  const int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(Shape{B, C, Ho, Wo}, rec);
  kern::avg_pool_fwd(B, C, H, W, k, stride, x.data(), y.data());
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, B, C, H, W, k, stride]() mutable {
      kern::avg_pool_bwd(B, C, H, W, k, stride, y.grad(), x.grad());
    }));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  check(x.ndim() == 4, "global_avg_pool: input must be [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1);
  const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(Shape{B, C}, rec);
  for (int p = 0; p < B * C; ++p) {
    double acc = 0.0;
    const T* xp = x.data() + size_t(p) * hw;
    for (int64_t i = 0; i < hw; ++i) acc += double(xp[i]);
    y.data()[p] = T(acc / double(hw));
  }
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, B, C, hw]() mutable {
      const T* g = y.grad();
      T* gx = x.grad();
      for (int p = 0; p < B * C; ++p) {
        const T gp = g[p] / T(hw);
        for (int64_t i = 0; i < hw; ++i) gx[size_t(p) * hw + i] += gp;
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> pixel_shuffle(Tape<T>* tape, const Tensor<T>& x, int r) {
  check(x.ndim() == 4, "pixel_shuffle: input must be [B,C*r*r,H,W]");
  check(r >= 1, "pixel_shuffle: bad factor");
  check(x.dim(1) % (r * r) == 0, "pixel_shuffle: channel count " + std::to_string(x.dim(1)) +
                                     " not divisible by r^2=" + std::to_string(r * r));
  const int B = x.dim(0), C = x.dim(1) / (r * r), H = x.dim(2), W = x.dim(3);
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(Shape{B, C, H * r, W * r}, rec);
  kern::pixel_shuffle_fwd(B, C, r, H, W, x.data(), y.data());
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, B, C, r, H, W]() mutable {
      kern::pixel_shuffle_bwd(B, C, r, H, W, y.grad(), x.grad());
    }));
  }
  return y;
}

template <typename T>
Tensor<T> upsample_bilinear(Tape<T>* tape, const Tensor<T>& x, int scale) {
  check(x.ndim() == 4, "upsample_bilinear: input must be [B,C,H,W]");
  check(scale >= 1, "upsample_bilinear: scale must be >= 1");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const bool rec = wants_grad(tape, {&x});
  Tensor<T> y(Shape{B, C, H * scale, W * scale}, rec);
  kern::bilinear_up_fwd(B, C, H, W, scale, x.data(), y.data());
  if (rec) {
    y.set_node(tape->record({x.node()}, [x = x, y = y, B, C, H, W, scale]() mutable {
      kern::bilinear_up_bwd(B, C, H, W, scale, y.grad(), x.grad());
    }));
  }
  return y;
}

template <typename T>
Tensor<T> concat_batch(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  check(!xs.empty(), "concat_batch: empty input list");
  Shape rest = xs[0].shape();
  int total = 0;
  for (const auto& x : xs) {
    check(x.ndim() == int(rest.size()), "concat_batch: rank mismatch");
    for (int d = 1; d < x.ndim(); ++d)
      check(x.dim(d) == rest[size_t(d)], "concat_batch: non-batch extent mismatch");
    total += x.dim(0);
  }
  Shape out_shape = rest;
  out_shape[0] = total;
  bool rec = false;
  if (tape)
    for (const auto& x : xs) rec = rec || x.requires_grad();
  Tensor<T> y(out_shape, rec);
  int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.data(), x.data() + x.numel(), y.data() + off);
    off += x.numel();
  }
  if (rec) {
    std::vector<int> in_nodes;
    for (const auto& x : xs) in_nodes.push_back(x.node());
    y.set_node(tape->record(in_nodes, [xs = xs, y = y]() mutable {
      const T* g = y.grad();
      int64_t pos = 0;
      for (auto& x : xs) {
        const int64_t n = x.numel();
        if (x.requires_grad()) {
          T* gx = x.grad();
          for (int64_t i = 0; i < n; ++i) gx[i] += g[pos + i];
        }
        pos += n;
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> mask_mix(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask) {
  check_same_shape(a, b, "mask_mix");
  check(a.ndim() == 4, "mask_mix: inputs must be [B,C,H,W]");
  check(mask.ndim() == 4 && mask.dim(0) == a.dim(0) && mask.dim(1) == 1 &&
            mask.dim(2) == a.dim(2) && mask.dim(3) == a.dim(3),
        "mask_mix: mask must be [B,1,H,W] matching inputs");
  const int B = a.dim(0), C = a.dim(1);
  const int64_t hw = int64_t(a.dim(2)) * a.dim(3);
  const bool rec = wants_grad(tape, {&a, &b});
  Tensor<T> y(a.shape(), rec);
  for (int bi = 0; bi < B; ++bi) {
    const T* m = mask.data() + size_t(bi) * hw;
    for (int c = 0; c < C; ++c) {
      const int64_t base = (size_t(bi) * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i)
        y.data()[base + i] = m[i] * a.data()[base + i] + (T(1) - m[i]) * b.data()[base + i];
    }
  }
  if (rec) {
    y.set_node(tape->record({a.node(), b.node()}, [a = a, b = b, mask = mask, y = y, B, C, hw]() mutable {
      const T* g = y.grad();
      for (int bi = 0; bi < B; ++bi) {
        const T* m = mask.data() + size_t(bi) * hw;
        for (int c = 0; c < C; ++c) {
          const int64_t base = (size_t(bi) * C + c) * hw;
          if (a.requires_grad()) {
            T* ga = a.grad();
            for (int64_t i = 0; i < hw; ++i) ga[base + i] += m[i] * g[base + i];
          }
          if (b.requires_grad()) {
            T* gb = b.grad();
            for (int64_t i = 0; i < hw; ++i) gb[base + i] += (T(1) - m[i]) * g[base + i];
          }
        }
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> l1_loss(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "l1_loss");
  const bool rec = wants_grad(tape, {&a, &b});
  Tensor<T> y(Shape{1}, rec);
  const int64_t n = a.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(double(a.data()[i]) - double(b.data()[i]));
  y.data()[0] = T(acc / double(n));
  if (rec) {
    y.set_node(tape->record({a.node(), b.node()}, [a = a, b = b, y = y, n]() mutable {
      const T g = y.grad()[0] / T(n);
      const T* pa = a.data();
      const T* pb = b.data();
      for (int64_t i = 0; i < n; ++i) {
        const T d = pa[i] - pb[i];
        const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
        if (a.requires_grad()) a.grad()[i] += s;
        if (b.requires_grad()) b.grad()[i] -= s;
      }
    }));
  }
  return y;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits, const IntTensor& labels) {
  check(logits.ndim() == 2 || logits.ndim() == 4,
        "softmax_cross_entropy: logits must be [B,C] or [B,C,H,W]");
  const int B = logits.dim(0), C = logits.dim(1);
  int64_t sites;  // independent softmax sites: B or B*H*W
  if (logits.ndim() == 2) {
    check(labels.shape == Shape{B}, "softmax_cross_entropy: labels must be [B]");
    sites = B;
  } else {
    check(labels.shape == (Shape{B, logits.dim(2), logits.dim(3)}),
          "softmax_cross_entropy: labels must be [B,H,W]");
    sites = int64_t(B) * logits.dim(2) * logits.dim(3);
  }
  const int64_t hw = logits.ndim() == 2 ? 1 : int64_t(logits.dim(2)) * logits.dim(3);
  for (int32_t lv : labels.data)
    check(lv >= 0 && lv < C, "softmax_cross_entropy: label " + std::to_string(lv) +
                                 " out of range [0," + std::to_string(C) + ")");
  const bool rec = wants_grad(tape, {&logits});
  // probabilities kept for the backward pass
  Tensor<T> probs(logits.shape());
  double acc = 0.0;
  for (int b = 0; b < B; ++b) {
    for (int64_t p = 0; p < hw; ++p) {
      const auto logit_at = [&](int c) {
        return logits.data()[(size_t(b) * C + c) * hw + p];
      };
      T mx = logit_at(0);
      for (int c = 1; c < C; ++c) mx = std::max(mx, logit_at(c));
      double z = 0.0;
      for (int c = 0; c < C; ++c) z += std::exp(double(logit_at(c)) - double(mx));
      const int32_t t = labels.data[size_t(b) * hw + p];
      acc += std::log(z) - (double(logit_at(t)) - double(mx));
      for (int c = 0; c < C; ++c)
        probs.data()[(size_t(b) * C + c) * hw + p] =
            T(std::exp(double(logit_at(c)) - double(mx)) / z);
    }
  }
  Tensor<T> y(Shape{1}, rec);
  y.data()[0] = T(acc / double(sites));
  if (rec) {
    IntTensor lab = labels;
    y.set_node(tape->record({logits.node()}, [logits = logits, probs = probs, lab = lab, y = y, B, C, hw, sites]() mutable {
      const T g = y.grad()[0] / T(sites);
      T* gl = logits.grad();
      for (int b = 0; b < B; ++b)
        for (int64_t p = 0; p < hw; ++p) {
          const int32_t t = lab.data[size_t(b) * hw + p];
          for (int c = 0; c < C; ++c) {
            const int64_t idx = (size_t(b) * C + c) * hw + p;
            gl[idx] += g * (probs.data()[idx] - (c == t ? T(1) : T(0)));
          }
        }
    }));
  }
  return y;
}

#define SR4IR_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                                     \
  template Tensor<T> affine<T>(Tape<T>*, const Tensor<T>&, T, T);                                \
  template Tensor<T> sum<T>(Tape<T>*, const Tensor<T>&);                                          \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                                         \
  template Tensor<T> clamp01<T>(Tape<T>*, const Tensor<T>&);                                      \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                               int, int);                                                         \
  template Tensor<T> linear<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> avg_pool2d<T>(Tape<T>*, const Tensor<T>&, int, int);                         \
  template Tensor<T> global_avg_pool<T>(Tape<T>*, const Tensor<T>&);                              \
  template Tensor<T> pixel_shuffle<T>(Tape<T>*, const Tensor<T>&, int);                           \
  template Tensor<T> upsample_bilinear<T>(Tape<T>*, const Tensor<T>&, int);                       \
  template Tensor<T> concat_batch<T>(Tape<T>*, const std::vector<Tensor<T>>&);                    \
  template Tensor<T> mask_mix<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> l1_loss<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> softmax_cross_entropy<T>(Tape<T>*, const Tensor<T>&, const IntTensor&);

SR4IR_INSTANTIATE_OPS(float)
SR4IR_INSTANTIATE_OPS(double)

}  // namespace sr4ir
