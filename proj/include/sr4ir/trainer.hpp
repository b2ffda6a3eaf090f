#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sr4ir/cqmix.hpp"
#include "sr4ir/data.hpp"
#include "sr4ir/losses.hpp"

namespace sr4ir {

// The five baseline training protocols plus the alternate framework.
enum class ScenarioKind { HR_to_T, LR_to_T, S_then_T, T_then_S, S_plus_T, SR4IR };

const char* scenario_name(ScenarioKind k);
ScenarioKind scenario_from_name(const std::string& name);

// lr0 * 0.5 * (1 + cos(pi * t / T))
double cosine_lr(int64_t t, int64_t t_total, double lr0);

struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
  int64_t t = 0;
  std::vector<Tensor<float>> m, v;
  void init(const ParamSet<float>& ps);
  void step(ParamSet<float>& ps, double lr);
};

struct SgdMomentum {
  double momentum = 0.9, weight_decay = 0.0;
  std::vector<Tensor<float>> vel;
  void init(const ParamSet<float>& ps);
  void step(ParamSet<float>& ps, double lr);
};

struct CqmixConfig {
  bool enabled = true;
  int n_patches = 16;  // cells_per_side^2; 16 suits 64x64 images
  double p_hr = 0.5;
};

struct TrainConfig {
  int epochs = 6;
  int batch_size = 16;
  // desk-scale rates; the paper's full-scale values are 1e-4 (AdamW, SR) and
  // 2e-2 / 3e-2 (SGD, task)
  double lr_sr = 1e-3;
  double lr_task = 5e-2;
  double weight_decay = 0.0;
  double momentum = 0.9;
  double tdp_warmup_fraction = 0.1;
  PerceptualKind perceptual_source = PerceptualKind::on_training_alternate;
  CqmixConfig cqmix;
  std::vector<Role> train_image_set = {Role::SR, Role::HR, Role::AUG};
  uint64_t seed = 1;
  // alternation granularity: k1 SR steps then k2 task steps per iteration
  int alt_sr_steps = 1;
  int alt_task_steps = 1;
  double pixel_weight = 1.0, tdp_weight = 1.0, task_weight = 1.0;
  int pretrain_epochs = -1;  // pretrained_* perceptual sources; -1 -> epochs

  void validate() const;
};

struct Metrics {
  double task_metric = 0.0;  // Top-1 or mIoU
  double psnr_db = 0.0;
  double mean_task_loss = 0.0;
};

struct EpochRow {
  int epoch = 0;
  double lr_sr = NAN, lr_task = NAN;
  double pixel_loss = NAN, tdp_loss = NAN, task_loss = NAN;
  double feat_variance = NAN;
  double test_metric = NAN, test_psnr = NAN;
};

struct RunReport {
  std::string run_id;
  ScenarioKind scenario = ScenarioKind::SR4IR;
  uint64_t seed = 0;
  std::vector<EpochRow> rows;
  Metrics final_metrics;
  double feat_var_initial = NAN, feat_var_min = NAN;
  bool collapse_triggered = false;  // feature variance fell by >= 10x
};

struct RunData {
  SplitCache train, test;
};

RunData load_run_data(const DatasetSpec& spec, uint64_t run_seed);

// Full mutable state of one run; the phase/step functions below are the only
// places that mutate parameters.
struct TrainerState {
  NetConfig net;
  TrainConfig cfg;
  ScenarioKind scenario = ScenarioKind::SR4IR;
  DegradationConfig degradation;
  ParamSet<float> sr, feat, head;
  AdamW opt_sr;
  SgdMomentum opt_feat, opt_head;
  PerceptualSource percep;
  int64_t sr_step = 0, task_step = 0;    // optimizer step counters
  int64_t sr_total = 0, task_total = 0;  // cosine schedule horizons
  int next_epoch = 0;
  double feat_var_initial = NAN, feat_var_min = NAN;

  int64_t tdp_warmup_steps() const {
    return int64_t(std::floor(cfg.tdp_warmup_fraction * double(sr_total)));
  }
};

// Builds params, optimizers and schedule horizons; runs the pretraining pass
// when the perceptual source needs a frozen snapshot.
TrainerState make_trainer(ScenarioKind scenario, const NetConfig& net, const TrainConfig& cfg,
                          const DatasetSpec& spec, const RunData& data);

struct Phase1Result {
  double pixel = NAN, tdp = NAN;
  double tdp_weight_applied = 0.0;  // 0 during warmup (computed, unapplied)
  double lr = NAN;
};

// Eq.-3 phase 1: one AdamW step on the SR parameters minimizing
// pixel + (t >= warmup ? tdp : 0); task parameters must be frozen.
Phase1Result phase1_step(TrainerState& st, const Batch& batch);

struct Phase2Result {
  double task = NAN;
  double feat_variance = NAN;
  double lr = NAN;
};

// Eq.-3 phase 2: I_cat is the batch-axis concatenation of the configured
// train_image_set members (SR / HR / AUG) with labels replicated; one SGD
// step on feature extractor + head. SR parameters must be frozen.
Phase2Result phase2_step(TrainerState& st, const Batch& batch);

struct JointResult {
  double pixel = NAN, tdp = NAN, task = NAN;
  double feat_variance = NAN;
};

// single-phase update of all networks at once; with_tdp enables the
// on-training joint perceptual term (the Table-6 collapse mode), and
// use_image_set selects I_cat (true) vs task loss on I_SR alone (false)
JointResult joint_step(TrainerState& st, const Batch& batch, bool with_tdp, bool use_image_set);

// pixel + task through the frozen task network, updating SR only
JointResult sr_through_task_step(TrainerState& st, const Batch& batch);

enum class EvalInput { HR, BILINEAR, SR };
EvalInput eval_input_for(ScenarioKind k);

Metrics evaluate(const NetConfig& net, EvalInput mode, const ParamSet<float>& sr,
                 const ParamSet<float>& feat, const ParamSet<float>& head,
                 const SplitCache& test, int scale, int batch_size);

struct RunIO {
  std::string dir;           // empty -> no artifacts written
  bool resume = false;       // continue from dir/checkpoint.bin when present
  int stop_after_epoch = -1; // interrupt the run after this many epochs (< 0: run to completion)
};

RunReport run_scenario(ScenarioKind scenario, const NetConfig& net, const TrainConfig& cfg,
                       const DatasetSpec& spec, const RunIO& io = {});

void save_checkpoint(const std::string& path, const TrainerState& st);
// false when the file does not exist; throws on corrupt or mismatched content
bool load_checkpoint(const std::string& path, TrainerState& st);

const char* metrics_csv_header();
std::string metrics_csv_row(const std::string& run_id, ScenarioKind scenario, const EpochRow& r);

}  // namespace sr4ir
