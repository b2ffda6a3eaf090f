#include "sr4ir/losses.hpp"

#include "sr4ir/ops.hpp"

namespace sr4ir {

const char* perceptual_name(PerceptualKind k) {
  switch (k) {
    case PerceptualKind::none: return "none";
    case PerceptualKind::on_training_alternate: return "on_training_alternate";
    case PerceptualKind::on_training_joint: return "on_training_joint";
    case PerceptualKind::pretrained_task: return "pretrained_task";
    case PerceptualKind::pretrained_generic: return "pretrained_generic";
  }
  return "?";
}

PerceptualKind perceptual_from_name(const std::string& name) {
  for (PerceptualKind k :
       {PerceptualKind::none, PerceptualKind::on_training_alternate,
        PerceptualKind::on_training_joint, PerceptualKind::pretrained_task,
        PerceptualKind::pretrained_generic})
    if (name == perceptual_name(k)) return k;
  fail("unknown perceptual source: " + name);
}

template <typename T>
Tensor<T> pixel_loss(Tape<T>* tape, const Tensor<T>& sr, const Tensor<T>& hr) {
  return l1_loss(tape, sr, hr);
}

template <typename T>
Tensor<T> tdp_loss(Tape<T>* tape, const ParamSet<T>& feat, const NetConfig& cfg,
                   const Tensor<T>& sr, const Tensor<T>& hr) {
  check(sr.shape() == hr.shape(), "tdp_loss: shape mismatch");
  check(feat.frozen, "tdp_loss: feature extractor must be frozen for this call");
  const int stages = cfg.tdp_stage < 0 ? cfg.feat_stages : cfg.tdp_stage;
  Tensor<T> f_sr = feat_forward_stages(tape, feat, sr, cfg, stages);
  // HR branch off-tape: no gradient ever flows through it
  Tensor<T> f_hr = feat_forward_stages<T>(nullptr, feat, hr.detached(), cfg, stages);
  return l1_loss(tape, f_sr, f_hr);
}

template <typename T>
Tensor<T> tdp_loss_joint(Tape<T>* tape, const ParamSet<T>& feat, const NetConfig& cfg,
                         const Tensor<T>& sr, const Tensor<T>& hr) {
  check(sr.shape() == hr.shape(), "tdp_loss: shape mismatch");
  check(!feat.frozen, "tdp_loss_joint: extractor must be trainable");
  const int stages = cfg.tdp_stage < 0 ? cfg.feat_stages : cfg.tdp_stage;
  Tensor<T> f_sr = feat_forward_stages(tape, feat, sr, cfg, stages);
  Tensor<T> f_hr = feat_forward_stages(tape, feat, hr, cfg, stages);
  return l1_loss(tape, f_sr, f_hr);
}

template <typename T>
Tensor<T> task_loss(Tape<T>* tape, const Tensor<T>& predictions, const IntTensor& labels,
                    TaskKind kind) {
  if (kind == TaskKind::classification)
    check(predictions.ndim() == 2, "task_loss: classification expects [B,C] logits");
  else
    check(predictions.ndim() == 4, "task_loss: segmentation expects [B,C,H,W] logits");
  return softmax_cross_entropy(tape, predictions, labels);
}

Tensor<float> perceptual_from_source(Tape<float>* tape, const PerceptualSource& src,
                                     ParamSet<float>& live_feat, const NetConfig& cfg,
                                     const Tensor<float>& sr, const Tensor<float>& hr) {
  switch (src.kind) {
    case PerceptualKind::none:
      return Tensor<float>{};
    case PerceptualKind::on_training_alternate:
      return tdp_loss(tape, live_feat, cfg, sr, hr);
    case PerceptualKind::on_training_joint:
      return tdp_loss_joint(tape, live_feat, cfg, sr, hr);
    case PerceptualKind::pretrained_task:
    case PerceptualKind::pretrained_generic: {
      check(src.frozen_params.has_value(),
            std::string("perceptual source ") + perceptual_name(src.kind) +
                ": missing pretrained snapshot");
      check(src.frozen_params->frozen, "perceptual source: snapshot must be frozen");
      return tdp_loss(tape, *src.frozen_params, cfg, sr, hr);
    }
  }
  fail("perceptual_from_source: bad kind");
}

#define SR4IR_INSTANTIATE_LOSSES(T)                                                        \
  template Tensor<T> pixel_loss<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> tdp_loss<T>(Tape<T>*, const ParamSet<T>&, const NetConfig&,           \
                                 const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> tdp_loss_joint<T>(Tape<T>*, const ParamSet<T>&, const NetConfig&,     \
                                       const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> task_loss<T>(Tape<T>*, const Tensor<T>&, const IntTensor&, TaskKind);

SR4IR_INSTANTIATE_LOSSES(float)
SR4IR_INSTANTIATE_LOSSES(double)

}  // namespace sr4ir
