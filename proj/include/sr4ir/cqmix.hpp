#pragma once

#include <cstdint>

#include "sr4ir/imaging.hpp"

namespace sr4ir {

// Cross-Quality Patch Mix: a grid-structured binary mask selects, per cell,
// whether a patch comes from the HR or the SR image. Labels are not mixed;
// both sources depict identical content.

struct GridMask {
  Tensor<float> mask;  // [B,1,H,W], values in {0,1}, constant within each cell
  int cells_per_side = 0;
  uint64_t seed = 0;
};

// each cell is 1 (HR) with probability p_hr, independently per cell and per
// sample; deterministic in seed
GridMask make_mask(int batch, int h, int w, int n_patches, double p_hr, uint64_t seed);

// I_aug = M * I_HR + (1-M) * I_SR, elementwise, mask broadcast over channels
ImageBatch mix(const ImageBatch& hr, const ImageBatch& sr, const GridMask& m);

}  // namespace sr4ir
