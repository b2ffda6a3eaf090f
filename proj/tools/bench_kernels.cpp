// Timing comparison of the optimized (OpenMP) kernels against the serial
// reference implementations, at shapes the training loop actually uses.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sr4ir/kernels.hpp"
#include "sr4ir/rng.hpp"

namespace {

using namespace sr4ir;

std::vector<float> rand_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = float(rng.uniform(-1.0, 1.0));
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const char* name, double gflop, double opt_s, double ref_s) {
  std::printf("%-28s opt %8.3f ms (%6.2f GFLOP/s)   ref %8.3f ms (%6.2f GFLOP/s)   speedup %5.2fx\n",
              name, opt_s * 1e3, gflop / opt_s, ref_s * 1e3, gflop / ref_s, ref_s / opt_s);
}

void bench_conv(int b, int ci, int h, int w, int co, int reps) {
  kern::Conv2dShape s{b, ci, h, w, co, 3, 1, 1};
  const auto x = rand_vec(size_t(b) * ci * h * w, 1);
  const auto wt = rand_vec(size_t(co) * ci * 9, 2);
  const auto bias = rand_vec(size_t(co), 3);
  std::vector<float> y(size_t(b) * co * s.ho() * s.wo());
  std::vector<float> gx(x.size()), gw(wt.size()), gb(bias.size());
  const double macs = double(b) * co * s.ho() * s.wo() * ci * 9;
  char label[64];

  std::snprintf(label, sizeof label, "conv2d_fwd %dx%dx%dx%d->%d", b, ci, h, w, co);
  report(label, 2e-9 * macs,
         time_of([&] { kern::conv2d_fwd(s, x.data(), wt.data(), bias.data(), y.data()); }, reps),
         time_of([&] { kern::ref::conv2d_fwd(s, x.data(), wt.data(), bias.data(), y.data()); },
                 reps));

  std::snprintf(label, sizeof label, "conv2d_bwd_x %dx%dx%dx%d->%d", b, ci, h, w, co);
  report(label, 2e-9 * macs,
         time_of([&] { kern::conv2d_bwd_x(s, wt.data(), y.data(), gx.data()); }, reps),
         time_of([&] { kern::ref::conv2d_bwd_x(s, wt.data(), y.data(), gx.data()); }, reps));

  std::snprintf(label, sizeof label, "conv2d_bwd_w %dx%dx%dx%d->%d", b, ci, h, w, co);
  report(label, 2e-9 * macs,
         time_of([&] { kern::conv2d_bwd_w(s, x.data(), y.data(), gw.data()); }, reps),
         time_of([&] { kern::ref::conv2d_bwd_w(s, x.data(), y.data(), gw.data()); }, reps));
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif

  // SR body, SR upsampler, feature extractor shapes (64x64 images, x4)
  bench_conv(16, 16, 16, 16, 16, 20);
  bench_conv(16, 16, 32, 32, 64, 5);
  bench_conv(16, 32, 32, 32, 32, 5);
  bench_conv(16, 3, 64, 64, 32, 5);

  {
    const int b = 16, c = 3, h = 16, w = 16, scale = 4;
    const auto x = rand_vec(size_t(b) * c * h * w, 4);
    std::vector<float> y(size_t(b) * c * h * scale * w * scale);
    const double gflop = 8e-9 * double(y.size());
    report("bilinear_up x4", gflop,
           time_of([&] { kern::bilinear_up_fwd(b, c, h, w, scale, x.data(), y.data()); }, 50),
           time_of([&] { kern::ref::bilinear_up_fwd(b, c, h, w, scale, x.data(), y.data()); },
                   50));
  }
  {
    const int b = 16, c = 3, h = 64, w = 64, scale = 4;
    const auto x = rand_vec(size_t(b) * c * h * w, 5);
    std::vector<float> y(size_t(b) * c * (h / scale) * (w / scale));
    const double gflop = 12e-9 * double(x.size());
    report("bicubic_down x4", gflop,
           time_of([&] { kern::bicubic_down(b, c, h, w, scale, x.data(), y.data()); }, 50),
           time_of([&] { kern::ref::bicubic_down(b, c, h, w, scale, x.data(), y.data()); }, 50));
  }
  {
    const int b = 16, c = 32, h = 64, w = 64;
    const auto x = rand_vec(size_t(b) * c * h * w, 6);
    std::vector<float> y(size_t(b) * c * (h / 2) * (w / 2));
    const double gflop = 4e-9 * double(x.size());
    report("avg_pool 2x2", gflop,
           time_of([&] { kern::avg_pool_fwd(b, c, h, w, 2, 2, x.data(), y.data()); }, 50),
           time_of([&] { kern::ref::avg_pool_fwd(b, c, h, w, 2, 2, x.data(), y.data()); }, 50));
  }
  return 0;
}
