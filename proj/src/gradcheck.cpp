#include "sr4ir/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "sr4ir/losses.hpp"
#include "sr4ir/ops.hpp"
#include "sr4ir/rng.hpp"

namespace sr4ir {

namespace {

constexpr double kH = 1e-5;

using D = double;
using Fwd = std::function<Tensor<D>(Tape<D>*)>;  // rebuilds the graph from leaves

Tensor<D> rand_tensor(Rng& rng, Shape shape, double lo, double hi, bool req = true) {
  Tensor<D> t(std::move(shape), req);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// scalarize op outputs with fixed random weights so every output element
// influences the loss
Tensor<D> weighted(Tape<D>* tape, Rng& rng, const Tensor<D>& y) {
  Tensor<D> w(y.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  return sum(tape, mul(tape, y, w));
}

// max over elements of |ad - fd| / max(1e-3, |ad|, |fd|)
double compare_grads(const Fwd& forward, std::vector<Tensor<D>*> leaves) {
  Tape<D> tape;
  Tensor<D> loss = forward(&tape);
  tape.backward(loss);
  double worst = 0.0;
  for (Tensor<D>* leaf : leaves) {
    if (!leaf->requires_grad()) continue;
    for (int64_t i = 0; i < leaf->numel(); ++i) {
      const double saved = leaf->data()[i];
      leaf->data()[i] = saved + kH;
      const double fp = forward(nullptr).item();
      leaf->data()[i] = saved - kH;
      const double fm = forward(nullptr).item();
      leaf->data()[i] = saved;
      const double fd = (fp - fm) / (2.0 * kH);
      const double ad = leaf->grad()[i];
      const double denom = std::max({1e-3, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(int num_seeds, double tol) {
  struct Case {
    std::string name;
    std::function<double(uint64_t)> run;  // returns max rel err for one seed
  };
  std::vector<Case> cases;

  cases.push_back({"conv2d", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {2, 3, 5, 4}, -1, 1);
    Tensor<D> w = rand_tensor(rng, {4, 3, 3, 3}, -0.6, 0.6);
    Tensor<D> b = rand_tensor(rng, {4}, -0.3, 0.3);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, conv2d(t, x, w, b, 1, 1));
        },
        {&x, &w, &b});
  }});
  cases.push_back({"conv2d_strided", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {1, 2, 5, 5}, -1, 1);
    Tensor<D> w = rand_tensor(rng, {3, 2, 3, 3}, -0.6, 0.6);
    Tensor<D> b = rand_tensor(rng, {3}, -0.3, 0.3);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, conv2d(t, x, w, b, 2, 0));
        },
        {&x, &w, &b});
  }});
  cases.push_back({"relu", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {7, 9}, -1, 1);
    // keep inputs away from the kink
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::abs(x.data()[i]) < 0.05) x.data()[i] += x.data()[i] >= 0 ? 0.1 : -0.1;
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, relu(t, x));
        },
        {&x});
  }});
  cases.push_back({"clamp01", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {6, 6}, 0.06, 0.94);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, clamp01(t, x));
        },
        {&x});
  }});
  cases.push_back({"linear", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {3, 4}, -1, 1);
    Tensor<D> w = rand_tensor(rng, {4, 5}, -0.7, 0.7);
    Tensor<D> b = rand_tensor(rng, {5}, -0.3, 0.3);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, linear(t, x, w, b));
        },
        {&x, &w, &b});
  }});
  cases.push_back({"avg_pool2d", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {2, 3, 4, 4}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, avg_pool2d(t, x, 2, 2));
        },
        {&x});
  }});
  cases.push_back({"global_avg_pool", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {2, 3, 4, 4}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, global_avg_pool(t, x));
        },
        {&x});
  }});
  cases.push_back({"pixel_shuffle", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {1, 8, 3, 3}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, pixel_shuffle(t, x, 2));
        },
        {&x});
  }});
  cases.push_back({"upsample_bilinear", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> x = rand_tensor(rng, {1, 3, 3, 3}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, upsample_bilinear(t, x, 2));
        },
        {&x});
  }});
  cases.push_back({"concat_batch", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> a = rand_tensor(rng, {2, 3}, -1, 1);
    Tensor<D> b = rand_tensor(rng, {1, 3}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, concat_batch(t, {a, b}));
        },
        {&a, &b});
  }});
  cases.push_back({"mask_mix", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> a = rand_tensor(rng, {1, 2, 4, 4}, -1, 1);
    Tensor<D> b = rand_tensor(rng, {1, 2, 4, 4}, -1, 1);
    Tensor<D> m(Shape{1, 1, 4, 4});
    for (int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.below(2) ? 1.0 : 0.0;
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, mask_mix(t, a, b, m));
        },
        {&a, &b});
  }});
  cases.push_back({"add_mul_scale", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> a = rand_tensor(rng, {4, 5}, -1, 1);
    Tensor<D> b = rand_tensor(rng, {4, 5}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, scale(t, add(t, mul(t, a, b), a), D(0.7)));
        },
        {&a, &b});
  }});
  cases.push_back({"l1_loss", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> a = rand_tensor(rng, {3, 4}, -1, 1);
    Tensor<D> b = rand_tensor(rng, {3, 4}, -1, 1);
    // keep |a-b| away from the kink
    for (int64_t i = 0; i < a.numel(); ++i)
      if (std::abs(a.data()[i] - b.data()[i]) < 0.05) a.data()[i] += 0.1;
    return compare_grads([&](Tape<D>* t) { return l1_loss(t, a, b); }, {&a, &b});
  }});
  cases.push_back({"softmax_ce", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> logits = rand_tensor(rng, {3, 5}, -2, 2);
    std::vector<int32_t> lab(3);
    for (auto& v : lab) v = int32_t(rng.below(5));
    IntTensor labels(Shape{3}, lab);
    return compare_grads(
        [&](Tape<D>* t) { return softmax_cross_entropy(t, logits, labels); }, {&logits});
  }});
  cases.push_back({"softmax_ce_spatial", [](uint64_t seed) {
    Rng rng(seed);
    Tensor<D> logits = rand_tensor(rng, {2, 4, 2, 3}, -2, 2);
    std::vector<int32_t> lab(2 * 2 * 3);
    for (auto& v : lab) v = int32_t(rng.below(4));
    IntTensor labels(Shape{2, 2, 3}, lab);
    return compare_grads(
        [&](Tape<D>* t) { return softmax_cross_entropy(t, logits, labels); }, {&logits});
  }});

  // composite forwards; tiny configs keep the element counts small
  const auto tiny_cfg = [](TaskKind task) {
    NetConfig cfg;
    cfg.sr_channels = 4;
    cfg.sr_blocks = 1;
    cfg.scale = 2;
    cfg.feat_channels = 5;
    cfg.feat_stages = 2;
    cfg.num_classes = 3;
    cfg.task_kind = task;
    return cfg;
  };

  cases.push_back({"sr_forward", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0x55);
    // small random tail keeps pre-clamp outputs inside (0,1)
    for (auto& [n, t] : sr.entries)
      if (n == "tail.w")
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-0.01, 0.01);
    Tensor<D> lr = rand_tensor(rng, {1, 3, 4, 4}, 0.3, 0.7, false);
    Rng wr(seed ^ 0x9e37);
    std::vector<Tensor<D>*> leaves;
    for (auto& [n, t] : sr.entries) leaves.push_back(&t);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, sr_forward(t, sr, lr, cfg));
        },
        leaves);
  }});
  cases.push_back({"feat_forward", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0x66);
    Tensor<D> img = rand_tensor(rng, {1, 3, 8, 8}, 0.05, 0.95);
    Rng wr(seed ^ 0x9e37);
    std::vector<Tensor<D>*> leaves{&img};
    for (auto& [n, t] : feat.entries) leaves.push_back(&t);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, feat_forward(t, feat, img, cfg));
        },
        leaves);
  }});
  cases.push_back({"head_forward_cls", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0x77);
    Tensor<D> f = rand_tensor(rng, {2, 5, 2, 2}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    std::vector<Tensor<D>*> leaves{&f};
    for (auto& [n, t] : head.entries) leaves.push_back(&t);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, head_forward(t, head, f, cfg));
        },
        leaves);
  }});
  cases.push_back({"head_forward_seg", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::segmentation);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0x88);
    Tensor<D> f = rand_tensor(rng, {1, 5, 2, 2}, -1, 1);
    Rng wr(seed ^ 0x9e37);
    std::vector<Tensor<D>*> leaves{&f};
    for (auto& [n, t] : head.entries) leaves.push_back(&t);
    return compare_grads(
        [&](Tape<D>* t) {
          Rng wcopy = wr;
          return weighted(t, wcopy, head_forward(t, head, f, cfg));
        },
        leaves);
  }});
  cases.push_back({"tdp_loss", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    feat.set_frozen(true);
    Rng rng(seed ^ 0x99);
    Tensor<D> a = rand_tensor(rng, {1, 3, 8, 8}, 0.1, 0.9);
    Tensor<D> b = rand_tensor(rng, {1, 3, 8, 8}, 0.1, 0.9, false);
    return compare_grads([&](Tape<D>* t) { return tdp_loss(t, feat, cfg, a, b); }, {&a});
  }});
  cases.push_back({"tdp_loss_joint_wrt_feat", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0xaa);
    Tensor<D> a = rand_tensor(rng, {1, 3, 8, 8}, 0.1, 0.9, false);
    Tensor<D> b = rand_tensor(rng, {1, 3, 8, 8}, 0.1, 0.9, false);
    std::vector<Tensor<D>*> leaves;
    for (auto& [n, t] : feat.entries) leaves.push_back(&t);
    return compare_grads([&](Tape<D>* t) { return tdp_loss_joint(t, feat, cfg, a, b); }, leaves);
  }});
  cases.push_back({"task_composite", [tiny_cfg](uint64_t seed) {
    const NetConfig cfg = tiny_cfg(TaskKind::classification);
    ParamSet<D> sr, feat, head;
    init_params<D>(cfg, seed, sr, feat, head);
    Rng rng(seed ^ 0xbb);
    Tensor<D> img = rand_tensor(rng, {2, 3, 8, 8}, 0.05, 0.95);
    std::vector<int32_t> lab(2);
    for (auto& v : lab) v = int32_t(rng.below(3));
    IntTensor labels(Shape{2}, lab);
    std::vector<Tensor<D>*> leaves{&img};
    for (auto& [n, t] : feat.entries) leaves.push_back(&t);
    for (auto& [n, t] : head.entries) leaves.push_back(&t);
    return compare_grads(
        [&](Tape<D>* t) {
          Tensor<D> f = feat_forward(t, feat, img, cfg);
          Tensor<D> p = head_forward(t, head, f, cfg);
          return task_loss(t, p, labels, cfg.task_kind);
        },
        leaves);
  }});

  std::vector<GradCheckResult> results;
  for (const Case& c : cases) {
    GradCheckResult r;
    r.op = c.name;
    for (int s = 0; s < num_seeds; ++s)
      r.max_rel_err = std::max(r.max_rel_err, c.run(0xc0ffee + uint64_t(s) * 7919));
    r.pass = r.max_rel_err < tol;
    results.push_back(r);
  }
  return results;
}

}  // namespace sr4ir
