#include "sr4ir/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sr4ir/ops.hpp"
#include "sr4ir/rng.hpp"
#include "sr4ir/serialize.hpp"

namespace sr4ir {

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::HR_to_T: return "HR_to_T";
    case ScenarioKind::LR_to_T: return "LR_to_T";
    case ScenarioKind::S_then_T: return "S_then_T";
    case ScenarioKind::T_then_S: return "T_then_S";
    case ScenarioKind::S_plus_T: return "S_plus_T";
    case ScenarioKind::SR4IR: return "SR4IR";
  }
  return "?";
}

ScenarioKind scenario_from_name(const std::string& name) {
  for (ScenarioKind k : {ScenarioKind::HR_to_T, ScenarioKind::LR_to_T, ScenarioKind::S_then_T,
                         ScenarioKind::T_then_S, ScenarioKind::S_plus_T, ScenarioKind::SR4IR})
    if (name == scenario_name(k)) return k;
  fail("unknown scenario: " + name);
}

double cosine_lr(int64_t t, int64_t t_total, double lr0) {
  check(t_total >= 1, "cosine_lr: schedule horizon must be >= 1");
  check(t >= 0 && t <= t_total,
        "cosine_lr: step " + std::to_string(t) + " beyond horizon " + std::to_string(t_total));
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * double(t) / double(t_total)));
}

void AdamW::init(const ParamSet<float>& ps) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto& [n, p] : ps.entries) {
    m.emplace_back(p.shape());
    v.emplace_back(p.shape());
  }
}

void AdamW::step(ParamSet<float>& ps, double lr) {
  check(!ps.frozen, "adamw: refusing to step a frozen param set");
  check(m.size() == ps.entries.size(), "adamw: optimizer state does not match param set");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (size_t e = 0; e < ps.entries.size(); ++e) {
    Tensor<float>& p = ps.entries[e].second;
    const float* g = p.grad();
    check(g != nullptr, "adamw: missing gradient buffer");
    float* pm = m[e].data();
    float* pv = v[e].data();
    float* pd = p.data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double gi = double(g[i]);
      const double mi = beta1 * double(pm[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * double(pv[i]) + (1.0 - beta2) * gi * gi;
      pm[i] = float(mi);
      pv[i] = float(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      pd[i] = float(double(pd[i]) - lr * weight_decay * double(pd[i]) -
                    lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

void SgdMomentum::init(const ParamSet<float>& ps) {
  vel.clear();
  for (const auto& [n, p] : ps.entries) vel.emplace_back(p.shape());
}

void SgdMomentum::step(ParamSet<float>& ps, double lr) {
  check(!ps.frozen, "sgd: refusing to step a frozen param set");
  check(vel.size() == ps.entries.size(), "sgd: optimizer state does not match param set");
  for (size_t e = 0; e < ps.entries.size(); ++e) {
    Tensor<float>& p = ps.entries[e].second;
    const float* g = p.grad();
    check(g != nullptr, "sgd: missing gradient buffer");
    float* pv = vel[e].data();
    float* pd = p.data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double gi = double(g[i]) + weight_decay * double(pd[i]);
      const double vi = momentum * double(pv[i]) + gi;
      pv[i] = float(vi);
      pd[i] = float(double(pd[i]) - lr * vi);
    }
  }
}

void TrainConfig::validate() const {
  check(epochs >= 1, "train: epochs must be >= 1");
  check(batch_size >= 1, "train: batch_size must be >= 1");
  check(lr_sr >= 0.0 && lr_task >= 0.0, "train: negative learning rate");
  check(weight_decay >= 0.0, "train: negative weight_decay");
  check(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0,1)");
  check(tdp_warmup_fraction >= 0.0 && tdp_warmup_fraction <= 1.0,
        "train: tdp_warmup_fraction must be in [0,1]");
  check(!train_image_set.empty(), "train: train_image_set must not be empty");
  bool has_aug = false;
  for (Role r : train_image_set) {
    check(r == Role::SR || r == Role::HR || r == Role::AUG,
          "train: train_image_set members must be SR, HR or AUG");
    has_aug = has_aug || r == Role::AUG;
  }
  if (has_aug) check(cqmix.enabled, "train: AUG in train_image_set requires cqmix.enabled");
  if (cqmix.enabled) {
    const int side = int(std::lround(std::sqrt(double(cqmix.n_patches))));
    check(side * side == cqmix.n_patches, "train: cqmix.n_patches must be a perfect square");
    check(cqmix.p_hr >= 0.0 && cqmix.p_hr <= 1.0, "train: cqmix.p_hr must be in [0,1]");
  }
  check(alt_sr_steps >= 1 && alt_task_steps >= 1, "train: alternation counts must be >= 1");
  check(pretrain_epochs == -1 || pretrain_epochs >= 1, "train: pretrain_epochs must be >= 1");
}

RunData load_run_data(const DatasetSpec& spec, uint64_t run_seed) {
  const uint64_t data_seed = stream_seed(run_seed, "data");
  RunData d;
  d.train = SplitCache(spec, spec.train_count, stream_seed(data_seed, "train"));
  d.test = SplitCache(spec, spec.test_count, stream_seed(data_seed, "test"));
  return d;
}

namespace {

double tensor_variance(const Tensor<float>& t) {
  const int64_t n = t.numel();
  double s = 0.0, s2 = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double v = double(t.data()[i]);
    s += v;
    s2 += v * v;
  }
  const double mean = s / double(n);
  return s2 / double(n) - mean * mean;
}

void set_freeze(TrainerState& st, bool sr_trainable, bool task_trainable) {
  if (st.sr.frozen == sr_trainable) st.sr.set_frozen(!sr_trainable);
  if (st.feat.frozen == task_trainable) st.feat.set_frozen(!task_trainable);
  if (st.head.frozen == task_trainable) st.head.set_frozen(!task_trainable);
}

IntTensor replicate_labels(const IntTensor& labels, int copies) {
  Shape s = labels.shape;
  s[0] *= copies;
  std::vector<int32_t> data;
  data.reserve(size_t(labels.numel()) * copies);
  for (int c = 0; c < copies; ++c) data.insert(data.end(), labels.data.begin(), labels.data.end());
  return IntTensor(std::move(s), std::move(data));
}

void track_feat_variance(TrainerState& st, double var) {
  if (std::isnan(st.feat_var_initial)) st.feat_var_initial = var;
  if (std::isnan(st.feat_var_min) || var < st.feat_var_min) st.feat_var_min = var;
}

// shared tail of every task-network update: CE on the given images, one SGD
// step on feat+head
Phase2Result task_update(TrainerState& st, const Tensor<float>& images, const IntTensor& labels) {
  Tape<float> tape;
  Tensor<float> feats = feat_forward(&tape, st.feat, images, st.net);
  Tensor<float> preds = head_forward(&tape, st.head, feats, st.net);
  Tensor<float> task = task_loss(&tape, preds, labels, st.net.task_kind);
  Tensor<float> total = scale(&tape, task, float(st.cfg.task_weight));
  tape.backward(total);
  Phase2Result res;
  res.task = double(task.item());
  res.lr = cosine_lr(st.task_step, st.task_total, st.cfg.lr_task);
  st.opt_feat.step(st.feat, res.lr);
  st.opt_head.step(st.head, res.lr);
  ++st.task_step;
  st.feat.zero_grad();
  st.head.zero_grad();
  res.feat_variance = tensor_variance(feats);
  track_feat_variance(st, res.feat_variance);
  return res;
}

// members of I_cat in configured order; SR output computed lazily at most once
std::vector<Tensor<float>> build_image_set(TrainerState& st, const Batch& batch,
                                           Tape<float>* tape, const Tensor<float>* live_sr) {
  std::vector<Tensor<float>> members;
  Tensor<float> sr_img;
  auto sr_image = [&]() -> const Tensor<float>& {
    if (live_sr) return *live_sr;
    if (!sr_img.defined()) sr_img = sr_forward<float>(nullptr, st.sr, batch.lr, st.net);
    return sr_img;
  };
  for (Role r : st.cfg.train_image_set) {
    switch (r) {
      case Role::SR:
        members.push_back(sr_image());
        break;
      case Role::HR:
        members.push_back(batch.hr);
        break;
      case Role::AUG: {
        const int B = batch.hr.dim(0);
        GridMask m = make_mask(B, batch.hr.dim(2), batch.hr.dim(3), st.cfg.cqmix.n_patches,
                               st.cfg.cqmix.p_hr,
                               stream_seed(st.cfg.seed, "cqmix", uint64_t(st.task_step)));
        members.push_back(mask_mix(tape, batch.hr, sr_image(), m.mask));
        break;
      }
      default:
        fail("build_image_set: bad role");
    }
  }
  return members;
}

Phase1Result phase1_impl(TrainerState& st, const Batch& batch, bool tdp_enabled) {
  check(st.feat.frozen && st.head.frozen, "phase1_step: task parameters must be frozen");
  check(!st.sr.frozen, "phase1_step: SR parameters are frozen");
  Tape<float> tape;
  Tensor<float> I_SR = sr_forward(&tape, st.sr, batch.lr, st.net);
  Tensor<float> pixel = pixel_loss(&tape, I_SR, batch.hr);
  Phase1Result res;
  res.pixel = double(pixel.item());
  Tensor<float> total;
  const bool apply = tdp_enabled && st.sr_step >= st.tdp_warmup_steps();
  if (apply) {
    Tensor<float> tdp = perceptual_from_source(&tape, st.percep, st.feat, st.net, I_SR, batch.hr);
    res.tdp = double(tdp.item());
    res.tdp_weight_applied = st.cfg.tdp_weight;
    total = add(&tape, scale(&tape, pixel, float(st.cfg.pixel_weight)),
                scale(&tape, tdp, float(st.cfg.tdp_weight)));
  } else {
    if (tdp_enabled) {
      // warmup: computed for the log, excluded from the objective
      Tensor<float> tdp = perceptual_from_source(nullptr, st.percep, st.feat, st.net,
                                                 I_SR.detached(), batch.hr);
      res.tdp = double(tdp.item());
    }
    res.tdp_weight_applied = 0.0;
    total = scale(&tape, pixel, float(st.cfg.pixel_weight));
  }
  tape.backward(total);
  res.lr = cosine_lr(st.sr_step, st.sr_total, st.cfg.lr_sr);
  st.opt_sr.step(st.sr, res.lr);
  ++st.sr_step;
  st.sr.zero_grad();
  return res;
}

}  // namespace

Phase1Result phase1_step(TrainerState& st, const Batch& batch) {
  check(st.cfg.perceptual_source != PerceptualKind::on_training_joint,
        "phase1_step: the joint perceptual source trains single-phase; use joint_step");
  return phase1_impl(st, batch, st.cfg.perceptual_source != PerceptualKind::none);
}

Phase2Result phase2_step(TrainerState& st, const Batch& batch) {
  check(st.sr.frozen, "phase2_step: SR parameters must be frozen");
  check(!st.feat.frozen && !st.head.frozen, "phase2_step: task parameters are frozen");
  check(!st.cfg.train_image_set.empty(), "phase2_step: empty train_image_set");
  std::vector<Tensor<float>> members = build_image_set(st, batch, nullptr, nullptr);
  Tensor<float> cat = concat_batch<float>(nullptr, members);
  IntTensor labels = replicate_labels(batch.labels, int(members.size()));
  return task_update(st, cat, labels);
}

JointResult joint_step(TrainerState& st, const Batch& batch, bool with_tdp, bool use_image_set) {
  check(!st.sr.frozen && !st.feat.frozen && !st.head.frozen,
        "joint_step: all parameters must be trainable");
  Tape<float> tape;
  Tensor<float> I_SR = sr_forward(&tape, st.sr, batch.lr, st.net);
  Tensor<float> pixel = pixel_loss(&tape, I_SR, batch.hr);
  JointResult res;
  res.pixel = double(pixel.item());
  Tensor<float> total = scale(&tape, pixel, float(st.cfg.pixel_weight));
  if (with_tdp && st.sr_step >= st.tdp_warmup_steps()) {
    Tensor<float> tdp = perceptual_from_source(&tape, st.percep, st.feat, st.net, I_SR, batch.hr);
    res.tdp = double(tdp.item());
    total = add(&tape, total, scale(&tape, tdp, float(st.cfg.tdp_weight)));
  }
  Tensor<float> task_in;
  IntTensor labels;
  if (use_image_set) {
    std::vector<Tensor<float>> members = build_image_set(st, batch, &tape, &I_SR);
    task_in = concat_batch(&tape, members);
    labels = replicate_labels(batch.labels, int(members.size()));
  } else {
    task_in = I_SR;
    labels = batch.labels;
  }
  Tensor<float> feats = feat_forward(&tape, st.feat, task_in, st.net);
  Tensor<float> preds = head_forward(&tape, st.head, feats, st.net);
  Tensor<float> task = task_loss(&tape, preds, labels, st.net.task_kind);
  res.task = double(task.item());
  total = add(&tape, total, scale(&tape, task, float(st.cfg.task_weight)));
  tape.backward(total);
  st.opt_sr.step(st.sr, cosine_lr(st.sr_step, st.sr_total, st.cfg.lr_sr));
  const double lr_task = cosine_lr(st.task_step, st.task_total, st.cfg.lr_task);
  st.opt_feat.step(st.feat, lr_task);
  st.opt_head.step(st.head, lr_task);
  ++st.sr_step;
  ++st.task_step;
  st.sr.zero_grad();
  st.feat.zero_grad();
  st.head.zero_grad();
  res.feat_variance = tensor_variance(feats);
  track_feat_variance(st, res.feat_variance);
  return res;
}

JointResult sr_through_task_step(TrainerState& st, const Batch& batch) {
  check(st.feat.frozen && st.head.frozen,
        "sr_through_task_step: task parameters must be frozen");
  check(!st.sr.frozen, "sr_through_task_step: SR parameters are frozen");
  Tape<float> tape;
  Tensor<float> I_SR = sr_forward(&tape, st.sr, batch.lr, st.net);
  Tensor<float> pixel = pixel_loss(&tape, I_SR, batch.hr);
  Tensor<float> feats = feat_forward(&tape, st.feat, I_SR, st.net);
  Tensor<float> preds = head_forward(&tape, st.head, feats, st.net);
  Tensor<float> task = task_loss(&tape, preds, batch.labels, st.net.task_kind);
  Tensor<float> total = add(&tape, scale(&tape, pixel, float(st.cfg.pixel_weight)),
                            scale(&tape, task, float(st.cfg.task_weight)));
  tape.backward(total);
  JointResult res;
  res.pixel = double(pixel.item());
  res.task = double(task.item());
  st.opt_sr.step(st.sr, cosine_lr(st.sr_step, st.sr_total, st.cfg.lr_sr));
  ++st.sr_step;
  st.sr.zero_grad();
  return res;
}

EvalInput eval_input_for(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::HR_to_T: return EvalInput::HR;
    case ScenarioKind::LR_to_T: return EvalInput::BILINEAR;
    default: return EvalInput::SR;
  }
}

Metrics evaluate(const NetConfig& net, EvalInput mode, const ParamSet<float>& sr,
                 const ParamSet<float>& feat, const ParamSet<float>& head,
                 const SplitCache& test, int scale, int batch_size) {
  check(test.size() >= 1, "evaluate: empty test set");
  const int C = net.head_classes();
  int64_t correct = 0, total_samples = 0;
  std::vector<int64_t> inter(size_t(C), 0), uni(size_t(C), 0);
  double ce_sum = 0.0;
  double psnr_sum = 0.0;
  int64_t psnr_count = 0;
  for (int start = 0; start < test.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(test.size(), start + batch_size); ++i) idx.push_back(i);
    Batch b = test.gather(idx, net.task_kind);
    Tensor<float> input;
    switch (mode) {
      case EvalInput::HR: input = b.hr; break;
      case EvalInput::BILINEAR: input = upsample_bilinear<float>(nullptr, b.lr, scale); break;
      case EvalInput::SR: input = sr_forward<float>(nullptr, sr, b.lr, net); break;
    }
    Tensor<float> feats = feat_forward<float>(nullptr, feat, input, net);
    Tensor<float> preds = head_forward<float>(nullptr, head, feats, net);
    Tensor<float> ce = task_loss<float>(nullptr, preds, b.labels, net.task_kind);
    const int B = int(idx.size());
    ce_sum += double(ce.item()) * B;
    total_samples += B;
    if (net.task_kind == TaskKind::classification) {
      for (int i = 0; i < B; ++i) {
        int best = 0;
        for (int c = 1; c < C; ++c)
          if (preds.data()[size_t(i) * C + c] > preds.data()[size_t(i) * C + best]) best = c;
        if (best == b.labels.data[size_t(i)]) ++correct;
      }
    } else {
      const int H = preds.dim(2), W = preds.dim(3);
      for (int i = 0; i < B; ++i)
        for (int64_t p = 0; p < int64_t(H) * W; ++p) {
          int best = 0;
          for (int c = 1; c < C; ++c)
            if (preds.data()[(size_t(i) * C + c) * H * W + p] >
                preds.data()[(size_t(i) * C + best) * H * W + p])
              best = c;
          const int truth = b.labels.data[size_t(i) * H * W + p];
          if (best == truth) ++inter[size_t(best)];
          if (best == truth) {
            ++uni[size_t(best)];
          } else {
            ++uni[size_t(best)];
            ++uni[size_t(truth)];
          }
        }
    }
    // PSNR of the task input against HR, per image then averaged
    const int64_t img = b.hr.numel() / B;
    for (int i = 0; i < B; ++i) {
      double mse = 0.0;
      for (int64_t p = 0; p < img; ++p) {
        const double d =
            double(input.data()[size_t(i) * img + p]) - double(b.hr.data()[size_t(i) * img + p]);
        mse += d * d;
      }
      mse /= double(img);
      psnr_sum += mse == 0.0 ? std::numeric_limits<double>::infinity()
                             : 10.0 * std::log10(1.0 / mse);
      ++psnr_count;
    }
  }
  Metrics m;
  m.mean_task_loss = ce_sum / double(total_samples);
  m.psnr_db = psnr_sum / double(psnr_count);
  if (net.task_kind == TaskKind::classification) {
    m.task_metric = double(correct) / double(total_samples);
  } else {
    double iou_sum = 0.0;
    int present = 0;
    for (int c = 0; c < C; ++c) {
      if (uni[size_t(c)] == 0) continue;  // absent from both pred and gt
      iou_sum += double(inter[size_t(c)]) / double(uni[size_t(c)]);
      ++present;
    }
    m.task_metric = present ? iou_sum / present : 0.0;
  }
  return m;
}

namespace {

ParamSet<float> pretrain_extractor(const NetConfig& net, const TrainConfig& cfg,
                                   const SplitCache& cache, uint64_t seed) {
  TrainerState st;
  st.net = net;
  st.cfg = cfg;
  st.cfg.perceptual_source = PerceptualKind::none;
  st.cfg.seed = seed;
  st.scenario = ScenarioKind::HR_to_T;
  ParamSet<float> unused_sr;
  init_params<float>(net, seed, unused_sr, st.feat, st.head);
  st.opt_feat.momentum = st.opt_head.momentum = cfg.momentum;
  st.opt_feat.weight_decay = st.opt_head.weight_decay = cfg.weight_decay;
  st.opt_feat.init(st.feat);
  st.opt_head.init(st.head);
  const int epochs = cfg.pretrain_epochs > 0 ? cfg.pretrain_epochs : cfg.epochs;
  const int spe = cache.size() / cfg.batch_size;
  check(spe >= 1, "pretrain: batch_size larger than the training split");
  st.task_total = int64_t(epochs) * spe;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto batches =
        epoch_batches(cache.size(), cfg.batch_size, true, stream_seed(seed, "shuffle", epoch));
    for (const auto& idx : batches) {
      Batch b = cache.gather(idx, net.task_kind);
      task_update(st, b.hr, b.labels);
    }
  }
  st.feat.set_frozen(true);
  return std::move(st.feat);
}

bool is_staged(ScenarioKind k) {
  return k == ScenarioKind::S_then_T || k == ScenarioKind::T_then_S;
}

}  // namespace

TrainerState make_trainer(ScenarioKind scenario, const NetConfig& net, const TrainConfig& cfg,
                          const DatasetSpec& spec, const RunData& data) {
  net.validate();
  cfg.validate();
  spec.validate();
  check(net.scale == spec.degradation.scale, "trainer: net scale differs from dataset scale");
  check(net.num_classes == spec.num_classes, "trainer: class count differs from dataset");
  TrainerState st;
  st.net = net;
  st.cfg = cfg;
  st.scenario = scenario;
  st.degradation = spec.degradation;
  init_params<float>(net, cfg.seed, st.sr, st.feat, st.head);
  st.opt_sr.weight_decay = cfg.weight_decay;
  st.opt_feat.momentum = st.opt_head.momentum = cfg.momentum;
  st.opt_feat.weight_decay = st.opt_head.weight_decay = cfg.weight_decay;
  st.opt_sr.init(st.sr);
  st.opt_feat.init(st.feat);
  st.opt_head.init(st.head);

  const int spe = data.train.size() / cfg.batch_size;
  check(spe >= 1, "trainer: batch_size larger than the training split");
  const int64_t base = int64_t(cfg.epochs) * spe;
  switch (scenario) {
    case ScenarioKind::HR_to_T:
    case ScenarioKind::LR_to_T:
      st.task_total = base;
      break;
    case ScenarioKind::S_then_T:
    case ScenarioKind::T_then_S:
      st.sr_total = base;
      st.task_total = base;
      break;
    case ScenarioKind::S_plus_T:
      st.sr_total = base;
      st.task_total = base;
      break;
    case ScenarioKind::SR4IR:
      if (cfg.perceptual_source == PerceptualKind::on_training_joint) {
        st.sr_total = base;
        st.task_total = base;
      } else {
        st.sr_total = base * cfg.alt_sr_steps;
        st.task_total = base * cfg.alt_task_steps;
      }
      break;
  }

  st.percep.kind = cfg.perceptual_source;
  if (cfg.perceptual_source == PerceptualKind::pretrained_task) {
    st.percep.frozen_params =
        pretrain_extractor(net, cfg, data.train, stream_seed(cfg.seed, "pretrain"));
  } else if (cfg.perceptual_source == PerceptualKind::pretrained_generic) {
    // same images, task-irrelevant labels (background color buckets)
    DatasetSpec generic = spec;
    generic.label_mode = LabelMode::background;
    const uint64_t data_seed = stream_seed(cfg.seed, "data");
    SplitCache generic_cache(generic, generic.train_count, stream_seed(data_seed, "train"));
    st.percep.frozen_params =
        pretrain_extractor(net, cfg, generic_cache, stream_seed(cfg.seed, "pretrain"));
  }
  return st;
}

namespace {

enum class StageKind { TASK_HR, TASK_BILINEAR, TASK_SR, SR_PIXEL, SR_THROUGH_TASK, ALTERNATE,
                       JOINT, JOINT_TDP };

StageKind stage_of(ScenarioKind scenario, PerceptualKind percep, int epoch, int epochs) {
  switch (scenario) {
    case ScenarioKind::HR_to_T: return StageKind::TASK_HR;
    case ScenarioKind::LR_to_T: return StageKind::TASK_BILINEAR;
    case ScenarioKind::S_then_T:
      return epoch < epochs ? StageKind::SR_PIXEL : StageKind::TASK_SR;
    case ScenarioKind::T_then_S:
      return epoch < epochs ? StageKind::TASK_HR : StageKind::SR_THROUGH_TASK;
    case ScenarioKind::S_plus_T: return StageKind::JOINT;
    case ScenarioKind::SR4IR:
      return percep == PerceptualKind::on_training_joint ? StageKind::JOINT_TDP
                                                         : StageKind::ALTERNATE;
  }
  fail("stage_of: bad scenario");
}

// task-only step on a fixed input source (baseline stages)
Phase2Result task_only_step(TrainerState& st, const Batch& batch, EvalInput mode) {
  Tensor<float> input;
  switch (mode) {
    case EvalInput::HR: input = batch.hr; break;
    case EvalInput::BILINEAR:
      input = upsample_bilinear<float>(nullptr, batch.lr, st.net.scale);
      break;
    case EvalInput::SR: input = sr_forward<float>(nullptr, st.sr, batch.lr, st.net); break;
  }
  return task_update(st, input, batch.labels);
}

struct EpochAccum {
  double pixel = 0, tdp = 0, task = 0, fvar = 0;
  int64_t n_pixel = 0, n_tdp = 0, n_task = 0, n_fvar = 0;
  double lr_sr = NAN, lr_task = NAN;

  void add_phase1(const Phase1Result& r) {
    pixel += r.pixel;
    ++n_pixel;
    if (!std::isnan(r.tdp)) {
      tdp += r.tdp;
      ++n_tdp;
    }
    if (std::isnan(lr_sr)) lr_sr = r.lr;
  }
  void add_phase2(const Phase2Result& r) {
    task += r.task;
    ++n_task;
    fvar += r.feat_variance;
    ++n_fvar;
    if (std::isnan(lr_task)) lr_task = r.lr;
  }
  void add_joint(const JointResult& r, double lrs, double lrt) {
    if (!std::isnan(r.pixel)) {
      pixel += r.pixel;
      ++n_pixel;
    }
    if (!std::isnan(r.tdp)) {
      tdp += r.tdp;
      ++n_tdp;
    }
    if (!std::isnan(r.task)) {
      task += r.task;
      ++n_task;
    }
    if (!std::isnan(r.feat_variance)) {
      fvar += r.feat_variance;
      ++n_fvar;
    }
    if (std::isnan(lr_sr)) lr_sr = lrs;
    if (std::isnan(lr_task)) lr_task = lrt;
  }
};

}  // namespace

const char* metrics_csv_header() {
  return "run_id,scenario,epoch,lr_sr,lr_task,pixel_loss,tdp_loss,task_loss,feat_variance,"
         "test_top1_or_miou,test_psnr";
}

std::string metrics_csv_row(const std::string& run_id, ScenarioKind scenario, const EpochRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                run_id.c_str(), scenario_name(scenario), r.epoch, r.lr_sr, r.lr_task,
                r.pixel_loss, r.tdp_loss, r.task_loss, r.feat_variance, r.test_metric,
                r.test_psnr);
  return buf;
}

void save_checkpoint(const std::string& path, const TrainerState& st) {
  NamedTensors entries;
  const auto push_set = [&entries](const std::string& prefix, const ParamSet<float>& ps) {
    for (const auto& [n, t] : ps.entries) entries.emplace_back(prefix + n, t);
  };
  push_set("sr.", st.sr);
  push_set("feat.", st.feat);
  push_set("head.", st.head);
  for (size_t i = 0; i < st.opt_sr.m.size(); ++i) {
    entries.emplace_back("opt.sr.m." + st.sr.entries[i].first, st.opt_sr.m[i]);
    entries.emplace_back("opt.sr.v." + st.sr.entries[i].first, st.opt_sr.v[i]);
  }
  for (size_t i = 0; i < st.opt_feat.vel.size(); ++i)
    entries.emplace_back("opt.feat.vel." + st.feat.entries[i].first, st.opt_feat.vel[i]);
  for (size_t i = 0; i < st.opt_head.vel.size(); ++i)
    entries.emplace_back("opt.head.vel." + st.head.entries[i].first, st.opt_head.vel[i]);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    check(f.good(), "save_checkpoint: cannot open " + tmp);
    write_entries(f, entries);
    const auto w64 = [&f](uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    const auto wf64 = [&f](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    w64(uint64_t(st.sr_step));
    w64(uint64_t(st.task_step));
    w64(uint64_t(st.opt_sr.t));
    w64(uint64_t(st.next_epoch));
    wf64(st.feat_var_initial);
    wf64(st.feat_var_min);
    check(f.good(), "save_checkpoint: write failed");
  }
  std::filesystem::rename(tmp, path);
}

bool load_checkpoint(const std::string& path, TrainerState& st) {
  if (!std::filesystem::exists(path)) return false;
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_checkpoint: cannot open " + path);
  NamedTensors entries = read_entries(f);
  const auto r64 = [&f]() {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    check(f.gcount() == 8, "load_checkpoint: truncated step counters");
    return v;
  };
  const auto rf64 = [&f]() {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    check(f.gcount() == 8, "load_checkpoint: truncated trailer");
    return v;
  };
  const uint64_t sr_step = r64();
  const uint64_t task_step = r64();
  const uint64_t adam_t = r64();
  const uint64_t next_epoch = r64();
  const double var_init = rf64();
  const double var_min = rf64();
  check(f.peek() == EOF, "load_checkpoint: trailing bytes in " + path);

  // validate the full schema before mutating anything
  const auto find = [&entries](const std::string& name) -> const Tensor<float>& {
    for (const auto& [n, t] : entries)
      if (n == name) return t;
    fail("load_checkpoint: missing entry " + name);
  };
  const auto check_set = [&find](const std::string& prefix, const ParamSet<float>& ps) {
    for (const auto& [n, t] : ps.entries)
      check(find(prefix + n).shape() == t.shape(),
            "load_checkpoint: shape mismatch for " + prefix + n);
  };
  check_set("sr.", st.sr);
  check_set("feat.", st.feat);
  check_set("head.", st.head);

  const auto copy_into = [&find](const std::string& name, Tensor<float>& dst) {
    const Tensor<float>& src = find(name);
    check(src.shape() == dst.shape(), "load_checkpoint: shape mismatch for " + name);
    std::copy(src.data(), src.data() + src.numel(), dst.data());
  };
  for (auto& [n, t] : st.sr.entries) copy_into("sr." + n, t);
  for (auto& [n, t] : st.feat.entries) copy_into("feat." + n, t);
  for (auto& [n, t] : st.head.entries) copy_into("head." + n, t);
  for (size_t i = 0; i < st.opt_sr.m.size(); ++i) {
    copy_into("opt.sr.m." + st.sr.entries[i].first, st.opt_sr.m[i]);
    copy_into("opt.sr.v." + st.sr.entries[i].first, st.opt_sr.v[i]);
  }
  for (size_t i = 0; i < st.opt_feat.vel.size(); ++i)
    copy_into("opt.feat.vel." + st.feat.entries[i].first, st.opt_feat.vel[i]);
  for (size_t i = 0; i < st.opt_head.vel.size(); ++i)
    copy_into("opt.head.vel." + st.head.entries[i].first, st.opt_head.vel[i]);
  st.sr_step = int64_t(sr_step);
  st.task_step = int64_t(task_step);
  st.opt_sr.t = int64_t(adam_t);
  st.next_epoch = int(next_epoch);
  st.feat_var_initial = var_init;
  st.feat_var_min = var_min;
  return true;
}

RunReport run_scenario(ScenarioKind scenario, const NetConfig& net, const TrainConfig& cfg,
                       const DatasetSpec& spec, const RunIO& io) {
  RunData data = load_run_data(spec, cfg.seed);
  TrainerState st = make_trainer(scenario, net, cfg, spec, data);

  RunReport rep;
  rep.run_id = std::string(scenario_name(scenario)) + "_s" + std::to_string(cfg.seed);
  rep.scenario = scenario;
  rep.seed = cfg.seed;

  std::string ckpt_path;
  bool resumed = false;
  if (!io.dir.empty()) {
    std::filesystem::create_directories(io.dir);
    ckpt_path = io.dir + "/checkpoint.bin";
    if (io.resume) resumed = load_checkpoint(ckpt_path, st);
  }

  std::ofstream csv;
  if (!io.dir.empty()) {
    const std::string csv_path = io.dir + "/metrics.csv";
    if (resumed && std::filesystem::exists(csv_path)) {
      csv.open(csv_path, std::ios::app);
    } else {
      csv.open(csv_path, std::ios::trunc);
      csv << metrics_csv_header() << "\n";
    }
    check(csv.good(), "run_scenario: cannot write metrics.csv in " + io.dir);
  }

  int total_epochs = is_staged(scenario) ? 2 * cfg.epochs : cfg.epochs;
  if (io.stop_after_epoch >= 0) total_epochs = std::min(total_epochs, io.stop_after_epoch);
  Metrics last;
  bool evaluated = false;
  for (int epoch = st.next_epoch; epoch < total_epochs; ++epoch) {
    const StageKind sk = stage_of(scenario, cfg.perceptual_source, epoch, cfg.epochs);
    const auto batches = epoch_batches(data.train.size(), cfg.batch_size, true,
                                       stream_seed(cfg.seed, "shuffle", uint64_t(epoch)));
    EpochAccum acc;
    for (const auto& idx : batches) {
      Batch b = data.train.gather(idx, net.task_kind);
      switch (sk) {
        case StageKind::TASK_HR:
        case StageKind::TASK_BILINEAR:
        case StageKind::TASK_SR: {
          set_freeze(st, false, true);
          const EvalInput mode = sk == StageKind::TASK_HR
                                     ? EvalInput::HR
                                     : (sk == StageKind::TASK_BILINEAR ? EvalInput::BILINEAR
                                                                       : EvalInput::SR);
          acc.add_phase2(task_only_step(st, b, mode));
          break;
        }
        case StageKind::SR_PIXEL: {
          set_freeze(st, true, false);
          acc.add_phase1(phase1_impl(st, b, false));
          break;
        }
        case StageKind::SR_THROUGH_TASK: {
          set_freeze(st, true, false);
          JointResult r = sr_through_task_step(st, b);
          acc.add_joint(r, cosine_lr(st.sr_step - 1, st.sr_total, cfg.lr_sr), NAN);
          break;
        }
        case StageKind::ALTERNATE: {
          for (int k = 0; k < cfg.alt_sr_steps; ++k) {
            set_freeze(st, true, false);
            acc.add_phase1(phase1_step(st, b));
          }
          for (int k = 0; k < cfg.alt_task_steps; ++k) {
            set_freeze(st, false, true);
            acc.add_phase2(phase2_step(st, b));
          }
          break;
        }
        case StageKind::JOINT:
        case StageKind::JOINT_TDP: {
          set_freeze(st, true, true);
          const double lrs = cosine_lr(st.sr_step, st.sr_total, cfg.lr_sr);
          const double lrt = cosine_lr(st.task_step, st.task_total, cfg.lr_task);
          acc.add_joint(joint_step(st, b, sk == StageKind::JOINT_TDP, sk == StageKind::JOINT_TDP),
                        lrs, lrt);
          break;
        }
      }
    }
    last = evaluate(net, eval_input_for(scenario), st.sr, st.feat, st.head, data.test,
                    spec.degradation.scale, cfg.batch_size);
    evaluated = true;
    EpochRow row;
    row.epoch = epoch;
    row.lr_sr = acc.lr_sr;
    row.lr_task = acc.lr_task;
    row.pixel_loss = acc.n_pixel ? acc.pixel / double(acc.n_pixel) : NAN;
    row.tdp_loss = acc.n_tdp ? acc.tdp / double(acc.n_tdp) : NAN;
    row.task_loss = acc.n_task ? acc.task / double(acc.n_task) : NAN;
    row.feat_variance = acc.n_fvar ? acc.fvar / double(acc.n_fvar) : NAN;
    row.test_metric = last.task_metric;
    row.test_psnr = last.psnr_db;
    rep.rows.push_back(row);
    if (csv.is_open()) {
      csv << metrics_csv_row(rep.run_id, scenario, row) << "\n";
      csv.flush();
    }
    st.next_epoch = epoch + 1;
    if (!ckpt_path.empty()) save_checkpoint(ckpt_path, st);
  }
  if (!evaluated)
    last = evaluate(net, eval_input_for(scenario), st.sr, st.feat, st.head, data.test,
                    spec.degradation.scale, cfg.batch_size);
  rep.final_metrics = last;
  rep.feat_var_initial = st.feat_var_initial;
  rep.feat_var_min = st.feat_var_min;
  rep.collapse_triggered = !std::isnan(st.feat_var_initial) && !std::isnan(st.feat_var_min) &&
                           st.feat_var_min <= st.feat_var_initial / 10.0;
  return rep;
}

}  // namespace sr4ir
