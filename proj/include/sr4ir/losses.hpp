#pragma once

#include <optional>

#include "sr4ir/nets.hpp"

namespace sr4ir {

// Which feature extractor backs the perceptual term. The pretrained kinds
// carry a frozen snapshot; the on-training kinds borrow the live extractor,
// either frozen for the call (alternate) or with gradients flowing into it
// (joint, the deliberate collapse mode).
enum class PerceptualKind {
  none,
  on_training_alternate,
  on_training_joint,
  pretrained_task,
  pretrained_generic,
};

const char* perceptual_name(PerceptualKind k);
PerceptualKind perceptual_from_name(const std::string& name);

struct PerceptualSource {
  PerceptualKind kind = PerceptualKind::on_training_alternate;
  std::optional<ParamSet<float>> frozen_params;  // pretrained_* kinds only
};

// element-mean l1 between SR and HR images
template <typename T>
Tensor<T> pixel_loss(Tape<T>* tape, const Tensor<T>& sr, const Tensor<T>& hr);

// element-mean l1 between F(SR) and F(HR); gradient flows only into the SR
// branch. Requires the extractor to be frozen for the call; the HR branch is
// evaluated off-tape.
template <typename T>
Tensor<T> tdp_loss(Tape<T>* tape, const ParamSet<T>& feat, const NetConfig& cfg,
                   const Tensor<T>& sr, const Tensor<T>& hr);

// softmax cross-entropy; per-pixel mean for segmentation
template <typename T>
Tensor<T> task_loss(Tape<T>* tape, const Tensor<T>& predictions, const IntTensor& labels,
                    TaskKind kind);

// Dispatches the perceptual term on the extractor designated by `src`.
// Returns an undefined tensor for kind none (contributes nothing).
Tensor<float> perceptual_from_source(Tape<float>* tape, const PerceptualSource& src,
                                     ParamSet<float>& live_feat, const NetConfig& cfg,
                                     const Tensor<float>& sr, const Tensor<float>& hr);

// joint-mode TDP: both branches on the tape, gradients enabled into the
// extractor (exposed for gradient checks)
template <typename T>
Tensor<T> tdp_loss_joint(Tape<T>* tape, const ParamSet<T>& feat, const NetConfig& cfg,
                         const Tensor<T>& sr, const Tensor<T>& hr);

}  // namespace sr4ir
