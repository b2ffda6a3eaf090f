#include "sr4ir/cqmix.hpp"

#include <cmath>

#include "sr4ir/ops.hpp"
#include "sr4ir/rng.hpp"

namespace sr4ir {

GridMask make_mask(int batch, int h, int w, int n_patches, double p_hr, uint64_t seed) {
  check(n_patches >= 1, "make_mask: n_patches must be >= 1");
  const int side = int(std::lround(std::sqrt(double(n_patches))));
  check(side * side == n_patches,
        "make_mask: n_patches " + std::to_string(n_patches) + " is not a perfect square");
  check(h % side == 0 && w % side == 0, "make_mask: extents " + std::to_string(h) + "x" +
                                            std::to_string(w) + " not divisible by grid side " +
                                            std::to_string(side));
  check(p_hr >= 0.0 && p_hr <= 1.0, "make_mask: p_hr must be in [0,1]");
  const int ch = h / side, cw = w / side;
  GridMask gm;
  gm.cells_per_side = side;
  gm.seed = seed;
  gm.mask = Tensor<float>(Shape{batch, 1, h, w});
  Rng rng(seed);
  for (int b = 0; b < batch; ++b)
    for (int cy = 0; cy < side; ++cy)
      for (int cx = 0; cx < side; ++cx) {
        const float v = rng.bernoulli(p_hr) ? 1.f : 0.f;
        float* base = gm.mask.data() + size_t(b) * h * w;
        for (int y = cy * ch; y < (cy + 1) * ch; ++y)
          for (int x = cx * cw; x < (cx + 1) * cw; ++x) base[size_t(y) * w + x] = v;
      }
  return gm;
}

ImageBatch mix(const ImageBatch& hr, const ImageBatch& sr, const GridMask& m) {
  check(hr.t.shape() == sr.t.shape(), "mix: shape mismatch");
  check(m.mask.defined() && m.mask.dim(0) == hr.batch() && m.mask.dim(2) == hr.height() &&
            m.mask.dim(3) == hr.width(),
        "mix: mask does not match images");
  Tensor<float> out = mask_mix<float>(nullptr, hr.t, sr.t, m.mask);
  return ImageBatch(std::move(out), Role::AUG);
}

}  // namespace sr4ir
