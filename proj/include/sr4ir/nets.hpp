#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sr4ir/tensor.hpp"

namespace sr4ir {

enum class TaskKind { classification, segmentation };

const char* task_name(TaskKind k);

// Named parameter collection for one network. Freezing drops the grad
// buffers, so a frozen set can never accumulate gradient; the optimizers
// refuse to step a frozen set.
template <typename T>
struct ParamSet {
  std::vector<std::pair<std::string, Tensor<T>>> entries;
  bool frozen = false;

  void add(const std::string& name, Tensor<T> t);
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;
  bool has(std::string_view name) const;

  void set_frozen(bool on);
  void zero_grad();
  uint64_t checksum() const;
  int64_t param_count() const;
  ParamSet clone() const;  // deep copy, same frozen state
};

struct NetConfig {
  int sr_channels = 16;
  int sr_blocks = 4;
  int scale = 4;  // 2, 4 or 8 (1 allowed for degenerate pipelines)
  int feat_channels = 32;
  int feat_stages = 3;  // 0 turns F into the identity map (test-only)
  int num_classes = 8;
  TaskKind task_kind = TaskKind::classification;
  int tdp_stage = -1;  // feature stage used by the TDP loss; -1 = final output

  // segmentation adds a background class to the logits
  int head_classes() const {
    return task_kind == TaskKind::segmentation ? num_classes + 1 : num_classes;
  }
  void validate() const;
};

// micro-EDSR: 3x3 head conv, residual blocks (conv-relu-conv + skip), one
// conv + pixel-shuffle stage per factor of 2, 3x3 tail conv, plus a global
// bilinear-upsample skip; output clamped to [0,1]
template <typename T>
Tensor<T> sr_forward(Tape<T>* tape, const ParamSet<T>& sr, const Tensor<T>& lr,
                     const NetConfig& cfg);

// feat_stages x (3x3 conv - relu - 2x2 avg pool); final map is the TDP space
template <typename T>
Tensor<T> feat_forward(Tape<T>* tape, const ParamSet<T>& feat, const Tensor<T>& img,
                       const NetConfig& cfg);

// run only the first `stages` stages (TDP intermediate-feature option)
template <typename T>
Tensor<T> feat_forward_stages(Tape<T>* tape, const ParamSet<T>& feat, const Tensor<T>& img,
                              const NetConfig& cfg, int stages);

// classification: global average pool + linear; segmentation: 1x1 conv +
// bilinear upsample back to image resolution
template <typename T>
Tensor<T> head_forward(Tape<T>* tape, const ParamSet<T>& head, const Tensor<T>& feat,
                       const NetConfig& cfg);

// Kaiming-uniform fan-in init, zero biases, zero-initialized SR tail conv;
// deterministic in seed
template <typename T>
void init_params(const NetConfig& cfg, uint64_t seed, ParamSet<T>& sr, ParamSet<T>& feat,
                 ParamSet<T>& head);

}  // namespace sr4ir
