#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sr4ir/imaging.hpp"
#include "sr4ir/nets.hpp"

namespace sr4ir {

// Procedural HR dataset: random-colored background plus one random-placed
// shape (disk or square) filled with the class's oriented stripe texture.
// Class identity lives in the stripe period, i.e. in frequencies the LR grid
// cannot represent for the short-period classes. Everything regenerates
// bit-exactly from (spec, index, split seed); no corpus is stored.

// `background` relabels the identical image stream by background color
// bucket; it backs the task-irrelevant pretraining ablation.
enum class LabelMode { texture, background };

struct DatasetSpec {
  int num_classes = 8;
  int image_size = 64;
  int train_count = 2000;
  int test_count = 500;
  std::vector<int> stripe_periods;  // empty -> defaults for num_classes
  DegradationConfig degradation;
  LabelMode label_mode = LabelMode::texture;

  std::vector<int> periods() const;
  void validate() const;
};

struct Sample {
  ImageBatch hr;   // single image
  int label = 0;   // texture class (or background bucket)
  IntTensor seg;   // [H,W]; 0 = background, 1..C = class id + 1
  uint64_t seed = 0;
};

Sample gen_sample(const DatasetSpec& spec, int index, uint64_t split_seed);

// optional gaussian blur, then bicubic downsample; output clamped to [0,1]
std::pair<ImageBatch, ImageBatch> make_pair(const ImageBatch& hr, const DegradationConfig& deg);

// full shuffle per epoch, deterministic in epoch_seed; empty result batches
// never occur (count >= 1 is required)
std::vector<std::vector<int>> epoch_batches(int count, int batch_size, bool drop_last,
                                            uint64_t epoch_seed);

struct Batch {
  Tensor<float> lr, hr;  // [B,3,h,w] / [B,3,H,W]
  IntTensor labels;      // [B] (classification) or [B,H,W] (segmentation)
  std::vector<int> indices;
};

// split materialized in memory; samples stay index-addressed
class SplitCache {
 public:
  SplitCache() = default;
  SplitCache(const DatasetSpec& spec, int count, uint64_t split_seed);
  int size() const { return count_; }
  Batch gather(const std::vector<int>& indices, TaskKind task) const;

 private:
  int count_ = 0;
  int hr_size_ = 0, lr_size_ = 0;
  std::vector<float> hr_, lr_;     // [count,3,H,W] / [count,3,h,w]
  std::vector<int32_t> labels_;    // [count]
  std::vector<int32_t> seg_;       // [count,H,W]
};

// PPM corpus plus a manifest (one line per sample: index, label, path);
// returns the number of samples written
int dump_dataset(const DatasetSpec& spec, const std::string& dir, uint64_t seed);

}  // namespace sr4ir
