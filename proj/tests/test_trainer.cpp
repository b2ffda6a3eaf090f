#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sr4ir/config.hpp"
#include "sr4ir/ops.hpp"
#include "sr4ir/rng.hpp"
#include "sr4ir/serialize.hpp"
#include "sr4ir/trainer.hpp"

using namespace sr4ir;

namespace {

// desk-scale-but-tiny setup shared by the trainer tests
DatasetSpec tiny_spec(int scale = 4) {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.image_size = 32;
  spec.train_count = 24;
  spec.test_count = 8;
  spec.degradation.scale = scale;
  return spec;
}

NetConfig tiny_net(int scale = 4) {
  NetConfig net;
  net.sr_channels = 6;
  net.sr_blocks = 1;
  net.scale = scale;
  net.feat_channels = 8;
  net.feat_stages = 2;
  net.num_classes = 4;
  return net;
}

TrainConfig tiny_train(uint64_t seed = 5) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("cosine_lr endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == doctest::Approx(0.5));
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25));
  CHECK_THROWS_WITH_AS(cosine_lr(101, 100, 0.5), doctest::Contains("beyond"),
                       std::runtime_error);
}

TEST_CASE("adamw single step matches the closed form") {
  ParamSet<float> ps;
  ps.add("w", Tensor<float>::from({1}, {0.8f}, true));
  ps.at("w").grad()[0] = 0.3f;
  AdamW opt;
  opt.weight_decay = 0.01;
  opt.init(ps);
  const double lr = 0.05;
  opt.step(ps, lr);
  // t=1: mhat = g, vhat = g^2
  const double g = 0.3;
  const double want = 0.8 - lr * 0.01 * 0.8 - lr * g / (std::sqrt(g * g) + 1e-8);
  CHECK(ps.at("w").data()[0] == doctest::Approx(want).epsilon(1e-7));

  // second step with a new gradient follows the bias-corrected recursion
  ps.at("w").grad()[0] = -0.1f;
  const double before = ps.at("w").data()[0];
  opt.step(ps, lr);
  const double m2 = 0.9 * (0.1 * g) / 0.1 + 0.0;  // unreduced form below
  (void)m2;
  const double m = 0.9 * (1 - 0.9) * g / (1 - 0.9) * 0 + 0;  // avoid confusion: recompute
  (void)m;
  {
    const double m1 = (1 - 0.9) * g;
    const double v1 = (1 - 0.999) * g * g;
    const double m2b = 0.9 * m1 + (1 - 0.9) * (-0.1);
    const double v2b = 0.999 * v1 + (1 - 0.999) * 0.01;
    const double mhat = m2b / (1 - 0.9 * 0.9);
    const double vhat = v2b / (1 - 0.999 * 0.999);
    const double want2 = before - lr * 0.01 * before - lr * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(ps.at("w").data()[0] == doctest::Approx(want2).epsilon(1e-6));
  }

  // frozen sets are refused
  ps.set_frozen(true);
  CHECK_THROWS_WITH_AS(opt.step(ps, lr), doctest::Contains("frozen"), std::runtime_error);
}

TEST_CASE("sgd momentum matches the recursion") {
  ParamSet<float> ps;
  ps.add("w", Tensor<float>::from({2}, {1.0f, -0.5f}, true));
  ps.at("w").grad()[0] = 0.2f;
  ps.at("w").grad()[1] = -0.4f;
  SgdMomentum opt;
  opt.momentum = 0.9;
  opt.init(ps);
  opt.step(ps, 0.1);
  CHECK(ps.at("w").data()[0] == doctest::Approx(1.0 - 0.1 * 0.2).epsilon(1e-7));
  CHECK(ps.at("w").data()[1] == doctest::Approx(-0.5 + 0.1 * 0.4).epsilon(1e-7));
  // same gradient again: velocity = 0.9*g + g
  opt.step(ps, 0.1);
  CHECK(ps.at("w").data()[0] == doctest::Approx(1.0 - 0.1 * 0.2 - 0.1 * 1.9 * 0.2).epsilon(1e-6));
}

TEST_CASE("phase1 with zero lr leaves SR parameters bit-identical") {
  const DatasetSpec spec = tiny_spec();
  TrainConfig tc = tiny_train();
  tc.lr_sr = 0.0;
  const NetConfig net = tiny_net();
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  st.feat.set_frozen(true);
  st.head.set_frozen(true);
  Batch b = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);
  const uint64_t before = st.sr.checksum();
  Phase1Result r = phase1_step(st, b);
  CHECK(st.sr.checksum() == before);
  CHECK(r.pixel >= 0.0);
}

TEST_CASE("warmup: tdp computed but unapplied, update equals pixel-only") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig with_tdp = tiny_train();
  with_tdp.epochs = 10;  // warmup covers the first 3 steps (0.1 * 10 * 3)
  TrainConfig pixel_only = with_tdp;
  pixel_only.perceptual_source = PerceptualKind::none;

  RunData data = load_run_data(spec, with_tdp.seed);
  TrainerState a = make_trainer(ScenarioKind::SR4IR, net, with_tdp, spec, data);
  TrainerState b = make_trainer(ScenarioKind::SR4IR, net, pixel_only, spec, data);
  REQUIRE(a.tdp_warmup_steps() == 3);
  for (auto* st : {&a, &b}) {
    st->feat.set_frozen(true);
    st->head.set_frozen(true);
  }
  Batch batch = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);
  for (int step = 0; step < 3; ++step) {
    Phase1Result ra = phase1_step(a, batch);
    Phase1Result rb = phase1_step(b, batch);
    CHECK(ra.tdp_weight_applied == 0.0);
    CHECK(!std::isnan(ra.tdp));       // computed for the log
    CHECK(std::isnan(rb.tdp));        // pixel-only run has no tdp at all
    CHECK(a.sr.checksum() == b.sr.checksum());
  }
  // first post-warmup step applies the tdp term and diverges
  Phase1Result ra = phase1_step(a, batch);
  phase1_step(b, batch);
  CHECK(ra.tdp_weight_applied == 1.0);
  CHECK(a.sr.checksum() != b.sr.checksum());
}

TEST_CASE("phase2 freezes SR and concatenates the image set") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.cqmix.n_patches = 16;
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  st.sr.set_frozen(true);
  Batch b = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);

  const uint64_t sr_before = st.sr.checksum();
  const uint64_t feat_before = st.feat.checksum();
  Phase2Result r = phase2_step(st, b);
  CHECK(st.sr.checksum() == sr_before);
  CHECK(st.feat.checksum() != feat_before);
  CHECK(r.task > 0.0);
  CHECK(r.feat_variance > 0.0);

  // unfrozen SR is rejected
  st.sr.set_frozen(false);
  CHECK_THROWS_WITH_AS(phase2_step(st, b), doctest::Contains("SR parameters must be frozen"),
                       std::runtime_error);
}

TEST_CASE("train_image_set(HR) reduces to a supervised step on HR") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.train_image_set = {Role::HR};
  tc.cqmix.enabled = false;
  RunData data = load_run_data(spec, tc.seed);

  TrainerState a = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  TrainerState b = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  a.sr.set_frozen(true);
  b.sr.set_frozen(true);
  Batch batch = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);
  phase2_step(a, batch);

  // manual supervised step on HR through the same tape machinery
  Tape<float> tape;
  Tensor<float> feats = feat_forward(&tape, b.feat, batch.hr, net);
  Tensor<float> preds = head_forward(&tape, b.head, feats, net);
  Tensor<float> loss = scale(&tape, task_loss(&tape, preds, batch.labels, net.task_kind),
                             float(tc.task_weight));
  tape.backward(loss);
  const double lr = cosine_lr(0, b.task_total, tc.lr_task);
  b.opt_feat.step(b.feat, lr);
  b.opt_head.step(b.head, lr);
  CHECK(a.feat.checksum() == b.feat.checksum());
  CHECK(a.head.checksum() == b.head.checksum());
}

TEST_CASE("I_cat size law and SR+HR duplication oracle at scale 1") {
  DatasetSpec spec = tiny_spec(1);
  NetConfig net = tiny_net(1);
  TrainConfig tc = tiny_train();
  tc.train_image_set = {Role::SR, Role::HR, Role::AUG};
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  st.sr.set_frozen(true);
  Batch b = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);

  // |I_cat| = |train_image_set| x batch_size, via the CE normalization:
  // identical members mean the loss equals the single-copy loss and the
  // gradient equals the single-copy gradient (mean over 3x the sites)
  // while duplicated members at 2x batch equal 2x the summed gradient.
  // At scale 1 the SR net is the identity at init (zero tail + bilinear
  // skip), so SR == HR and AUG == HR exactly.
  Tensor<float> sr_img = sr_forward<float>(nullptr, st.sr, b.lr, net);
  for (int64_t i = 0; i < sr_img.numel(); ++i) CHECK(sr_img.data()[i] == b.hr.data()[i]);

  // gradient of mean-CE over duplicated batch equals the single-copy gradient
  TrainConfig tc2 = tc;
  tc2.train_image_set = {Role::SR, Role::HR};
  tc2.cqmix.enabled = false;
  TrainerState a1 = make_trainer(ScenarioKind::SR4IR, net, tc2, spec, data);
  a1.sr.set_frozen(true);
  Tape<float> tape1;
  std::vector<Tensor<float>> members{sr_img, b.hr};
  Tensor<float> cat = concat_batch<float>(nullptr, members);
  CHECK(cat.dim(0) == 2 * 8);
  Tensor<float> f1 = feat_forward(&tape1, a1.feat, cat, net);
  IntTensor lab2(Shape{16}, [&] {
    std::vector<int32_t> v(b.labels.data);
    v.insert(v.end(), b.labels.data.begin(), b.labels.data.end());
    return v;
  }());
  Tensor<float> l1v = task_loss(&tape1, head_forward(&tape1, a1.head, f1, net), lab2,
                                net.task_kind);
  tape1.backward(l1v);

  TrainerState a2 = make_trainer(ScenarioKind::SR4IR, net, tc2, spec, data);
  a2.sr.set_frozen(true);
  Tape<float> tape2;
  Tensor<float> f2 = feat_forward(&tape2, a2.feat, b.hr, net);
  Tensor<float> l2v = task_loss(&tape2, head_forward(&tape2, a2.head, f2, net), b.labels,
                                net.task_kind);
  tape2.backward(l2v);

  // duplicated mean-CE == single mean-CE, so gradients agree
  for (size_t e = 0; e < a1.feat.entries.size(); ++e)
    for (int64_t i = 0; i < a1.feat.entries[e].second.numel(); ++i)
      CHECK(a1.feat.entries[e].second.grad()[i] ==
            doctest::Approx(a2.feat.entries[e].second.grad()[i]).epsilon(1e-5));
}

TEST_CASE("miou matches a hand-computed confusion for a constant predictor") {
  DatasetSpec spec = tiny_spec();
  NetConfig net = tiny_net();
  net.task_kind = TaskKind::segmentation;
  TrainConfig tc = tiny_train();
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::HR_to_T, net, tc, spec, data);

  // force a constant prediction: zero features, head bias selects class 2
  for (auto& [n, t] : st.feat.entries)
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.f;
  for (auto& [n, t] : st.head.entries)
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.f;
  st.head.at("conv.b").data()[2] = 5.f;

  Metrics m = evaluate(net, EvalInput::HR, st.sr, st.feat, st.head, data.test,
                       spec.degradation.scale, tc.batch_size);

  // oracle from the ground-truth maps: predictor says class 2 everywhere
  std::vector<int64_t> gt_count(size_t(net.head_classes()), 0);
  int64_t total = 0;
  for (int i = 0; i < data.test.size(); ++i) {
    Batch b = data.test.gather({i}, TaskKind::segmentation);
    for (int32_t v : b.labels.data) {
      ++gt_count[size_t(v)];
      ++total;
    }
  }
  double iou_sum = 0;
  int present = 0;
  for (int c = 0; c < net.head_classes(); ++c) {
    const bool in_pred = c == 2;
    const bool in_gt = gt_count[size_t(c)] > 0;
    if (!in_pred && !in_gt) continue;  // absent from both: skipped
    ++present;
    if (c == 2) iou_sum += double(gt_count[2]) / double(total);  // union is every pixel
    // other classes: no intersection, contribution 0
  }
  CHECK(m.task_metric == doctest::Approx(iou_sum / present).epsilon(1e-9));
}

TEST_CASE("segmentation evaluate returns valid miou") {
  DatasetSpec spec = tiny_spec();
  NetConfig net = tiny_net();
  net.task_kind = TaskKind::segmentation;
  TrainConfig tc = tiny_train();
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::HR_to_T, net, tc, spec, data);
  Metrics m = evaluate(net, EvalInput::HR, st.sr, st.feat, st.head, data.test,
                       spec.degradation.scale, tc.batch_size);
  CHECK(m.task_metric >= 0.0);
  CHECK(m.task_metric <= 1.0);
  CHECK(std::isinf(m.psnr_db));
}

TEST_CASE("S_then_T stage 1 equals a scripted pixel-only run bit-exactly") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.epochs = 2;

  RunReport rep = run_scenario(ScenarioKind::S_then_T, net, tc, spec);

  // scripted pixel-only training with the same seeds
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::S_then_T, net, tc, spec, data);
  st.feat.set_frozen(true);
  st.head.set_frozen(true);
  double last_pixel_sum = 0;
  int last_count = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    last_pixel_sum = 0;
    last_count = 0;
    for (const auto& idx :
         epoch_batches(spec.train_count, tc.batch_size, true,
                       stream_seed(tc.seed, "shuffle", uint64_t(epoch)))) {
      Batch b = data.train.gather(idx, net.task_kind);
      TrainConfig pixel_cfg = tc;
      pixel_cfg.perceptual_source = PerceptualKind::none;
      TrainerState* p = &st;
      std::swap(p->cfg, pixel_cfg);
      Phase1Result r = phase1_step(*p, b);
      std::swap(p->cfg, pixel_cfg);
      last_pixel_sum += r.pixel;
      ++last_count;
    }
  }
  CHECK(rep.rows[1].pixel_loss == doctest::Approx(last_pixel_sum / last_count).epsilon(1e-12));
}

TEST_CASE("scenario freeze contract over a short SR4IR run") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.epochs = 1;
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  const auto batches = epoch_batches(spec.train_count, tc.batch_size, true,
                                     stream_seed(tc.seed, "shuffle", 0));
  for (const auto& idx : batches) {
    Batch b = data.train.gather(idx, net.task_kind);
    st.sr.set_frozen(false);
    st.feat.set_frozen(true);
    st.head.set_frozen(true);
    const uint64_t f0 = st.feat.checksum(), h0 = st.head.checksum();
    phase1_step(st, b);
    CHECK(st.feat.checksum() == f0);
    CHECK(st.head.checksum() == h0);

    st.sr.set_frozen(true);
    st.feat.set_frozen(false);
    st.head.set_frozen(false);
    const uint64_t s0 = st.sr.checksum();
    phase2_step(st, b);
    CHECK(st.sr.checksum() == s0);
  }
}

TEST_CASE("HR_to_T and LR_to_T coincide at scale 1") {
  DatasetSpec spec = tiny_spec(1);
  NetConfig net = tiny_net(1);
  TrainConfig tc = tiny_train();
  RunReport a = run_scenario(ScenarioKind::HR_to_T, net, tc, spec);
  RunReport b = run_scenario(ScenarioKind::LR_to_T, net, tc, spec);
  CHECK(a.final_metrics.task_metric == b.final_metrics.task_metric);
  CHECK(a.final_metrics.mean_task_loss == b.final_metrics.mean_task_loss);
}

TEST_CASE("S_plus_T with lr_task=0 matches pixel+task training of SR alone") {
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.lr_task = 0.0;
  RunData data = load_run_data(spec, tc.seed);

  TrainerState a = make_trainer(ScenarioKind::S_plus_T, net, tc, spec, data);
  TrainerState b = make_trainer(ScenarioKind::S_plus_T, net, tc, spec, data);
  Batch batch = data.train.gather({0, 1, 2, 3, 4, 5, 6, 7}, net.task_kind);

  for (int step = 0; step < 3; ++step) joint_step(a, batch, false, false);

  // frozen-task pixel+task updates of the SR net from the same init
  b.feat.set_frozen(true);
  b.head.set_frozen(true);
  for (int step = 0; step < 3; ++step) sr_through_task_step(b, batch);

  CHECK(a.sr.checksum() == b.sr.checksum());
}

TEST_CASE("checkpoint save/load round trip and corrupt rejection") {
  namespace fs = std::filesystem;
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  RunData data = load_run_data(spec, tc.seed);
  TrainerState st = make_trainer(ScenarioKind::SR4IR, net, tc, spec, data);
  st.sr_step = 17;
  st.task_step = 19;
  st.next_epoch = 2;
  st.feat_var_initial = 0.5;
  st.feat_var_min = 0.25;
  fs::create_directories("test_ckpt_out");
  save_checkpoint("test_ckpt_out/c.bin", st);

  TrainerState fresh = make_trainer(ScenarioKind::SR4IR, net, tiny_train(123), spec,
                                    load_run_data(spec, 123));
  CHECK(fresh.sr.checksum() != st.sr.checksum());
  REQUIRE(load_checkpoint("test_ckpt_out/c.bin", fresh));
  CHECK(fresh.sr.checksum() == st.sr.checksum());
  CHECK(fresh.feat.checksum() == st.feat.checksum());
  CHECK(fresh.head.checksum() == st.head.checksum());
  CHECK(fresh.sr_step == 17);
  CHECK(fresh.task_step == 19);
  CHECK(fresh.next_epoch == 2);
  CHECK(fresh.feat_var_initial == 0.5);
  CHECK(fresh.feat_var_min == 0.25);

  // truncated file: explicit error, no partial state applied
  {
    std::ifstream in("test_ckpt_out/c.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("test_ckpt_out/trunc.bin", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  TrainerState untouched = make_trainer(ScenarioKind::SR4IR, net, tiny_train(9), spec,
                                        load_run_data(spec, 9));
  const uint64_t before = untouched.sr.checksum();
  CHECK_THROWS(load_checkpoint("test_ckpt_out/trunc.bin", untouched));
  CHECK(untouched.sr.checksum() == before);

  // missing file reports false
  CHECK(!load_checkpoint("test_ckpt_out/nope.bin", untouched));
  fs::remove_all("test_ckpt_out");
}

TEST_CASE("resume equals the uninterrupted run bit-exactly") {
  namespace fs = std::filesystem;
  const DatasetSpec spec = tiny_spec();
  const NetConfig net = tiny_net();
  TrainConfig tc = tiny_train();
  tc.epochs = 4;  // 4 epochs x 3 batches > 10 steps per optimizer

  fs::remove_all("test_resume_a");
  fs::remove_all("test_resume_b");
  RunReport full = run_scenario(ScenarioKind::SR4IR, net, tc, spec, {"test_resume_a", false, -1});

  // interrupted after two epochs, then resumed with the same config
  run_scenario(ScenarioKind::SR4IR, net, tc, spec, {"test_resume_b", false, 2});
  RunReport resumed = run_scenario(ScenarioKind::SR4IR, net, tc, spec, {"test_resume_b", true, -1});

  CHECK(resumed.final_metrics.task_metric == full.final_metrics.task_metric);
  CHECK(resumed.final_metrics.psnr_db == full.final_metrics.psnr_db);
  CHECK(resumed.final_metrics.mean_task_loss == full.final_metrics.mean_task_loss);

  // per-epoch csv rows match for the shared epochs
  std::ifstream fa("test_resume_a/metrics.csv"), fb("test_resume_b/metrics.csv");
  std::string la, lb;
  int lines = 0;
  while (std::getline(fa, la) && std::getline(fb, lb)) {
    CHECK(la == lb);
    ++lines;
  }
  CHECK(lines == tc.epochs + 1);  // header + one row per epoch
  fs::remove_all("test_resume_a");
  fs::remove_all("test_resume_b");
}

TEST_CASE("metrics csv rows are stable") {
  EpochRow r;
  r.epoch = 3;
  r.lr_sr = 0.001;
  r.lr_task = NAN;
  r.pixel_loss = 0.125;
  r.test_psnr = std::numeric_limits<double>::infinity();
  const std::string row = metrics_csv_row("SR4IR_s1", ScenarioKind::SR4IR, r);
  CHECK(row == "SR4IR_s1,SR4IR,3,0.001,nan,0.125,nan,nan,nan,nan,inf");
}

TEST_SUITE_END();
