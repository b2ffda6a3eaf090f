#include "sr4ir/nets.hpp"

#include <cmath>

#include "sr4ir/ops.hpp"
#include "sr4ir/rng.hpp"

namespace sr4ir {

const char* task_name(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "segmentation";
}

template <typename T>
void ParamSet<T>::add(const std::string& name, Tensor<T> t) {
  check(!has(name), "param set: duplicate name " + name);
  t.set_requires_grad(!frozen);
  entries.emplace_back(name, std::move(t));
}

template <typename T>
Tensor<T>& ParamSet<T>::at(std::string_view name) {
  for (auto& [n, t] : entries)
    if (n == name) return t;
  fail("param set: no entry named " + std::string(name));
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(std::string_view name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  fail("param set: no entry named " + std::string(name));
}

template <typename T>
bool ParamSet<T>::has(std::string_view name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return true;
  return false;
}

template <typename T>
void ParamSet<T>::set_frozen(bool on) {
  frozen = on;
  for (auto& [n, t] : entries) t.set_requires_grad(!on);
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& [n, t] : entries) t.zero_grad();
}

template <typename T>
uint64_t ParamSet<T>::checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [n, t] : entries) {
    h = fnv1a(n, h);
    h = fnv1a(t.data(), size_t(t.numel()) * sizeof(T), h);
  }
  return h;
}

template <typename T>
int64_t ParamSet<T>::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries) n += t.numel();
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::clone() const {
  ParamSet<T> out;
  out.frozen = frozen;
  for (const auto& [n, t] : entries) {
    Tensor<T> c = t.clone();
    c.set_requires_grad(!frozen);
    out.entries.emplace_back(n, std::move(c));
  }
  return out;
}

void NetConfig::validate() const {
  check(scale == 1 || scale == 2 || scale == 4 || scale == 8,
        "net: scale must be one of 1,2,4,8, got " + std::to_string(scale));
  check(sr_channels >= 1 && sr_blocks >= 1 && feat_channels >= 1 && num_classes >= 1,
        "net: channel/block/class counts must be >= 1");
  check(feat_stages >= 0, "net: feat_stages must be >= 0");
  check(tdp_stage == -1 || (tdp_stage >= 1 && tdp_stage <= feat_stages),
        "net: tdp_stage out of range");
}

namespace {

int upsample_stages(int scale) {
  int n = 0;
  while ((1 << n) < scale) ++n;
  return n;
}

}  // namespace

template <typename T>
Tensor<T> sr_forward(Tape<T>* tape, const ParamSet<T>& sr, const Tensor<T>& lr,
                     const NetConfig& cfg) {
  check(lr.ndim() == 4 && lr.dim(1) == 3, "sr_forward: input must be [B,3,H,W]");
  check(sr.at("head.w").dim(0) == cfg.sr_channels,
        "sr_forward: scale/config mismatch with parameter shapes");
  Tensor<T> x = conv2d(tape, lr, sr.at("head.w"), sr.at("head.b"), 1, 1);
  for (int i = 0; i < cfg.sr_blocks; ++i) {
    const std::string p = "block" + std::to_string(i);
    Tensor<T> t = conv2d(tape, x, sr.at(p + ".c1.w"), sr.at(p + ".c1.b"), 1, 1);
    t = relu(tape, t);
    t = conv2d(tape, t, sr.at(p + ".c2.w"), sr.at(p + ".c2.b"), 1, 1);
    x = add(tape, x, t);
  }
  for (int j = 0; j < upsample_stages(cfg.scale); ++j) {
    const std::string p = "up" + std::to_string(j);
    x = conv2d(tape, x, sr.at(p + ".w"), sr.at(p + ".b"), 1, 1);
    x = pixel_shuffle(tape, x, 2);
  }
  x = conv2d(tape, x, sr.at("tail.w"), sr.at("tail.b"), 1, 1);
  Tensor<T> skip = upsample_bilinear(tape, lr, cfg.scale);
  return clamp01(tape, add(tape, x, skip));
}

template <typename T>
Tensor<T> feat_forward_stages(Tape<T>* tape, const ParamSet<T>& feat, const Tensor<T>& img,
                              const NetConfig& cfg, int stages) {
  check(img.ndim() == 4, "feat_forward: input must be [B,C,H,W]");
  check(stages >= 0 && stages <= cfg.feat_stages, "feat_forward: bad stage count");
  const int div = 1 << stages;
  check(img.dim(2) % div == 0 && img.dim(3) % div == 0,
        "feat_forward: extents " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(3)) +
            " not divisible by 2^" + std::to_string(stages));
  if (stages == 0) return img;  // identity extractor
  // center [0,1] images; uncentered inputs leave half the first-stage units
  // saturated at init
  Tensor<T> x = affine(tape, img, T(2), T(-1));
  for (int i = 0; i < stages; ++i) {
    const std::string p = "stage" + std::to_string(i);
    x = conv2d(tape, x, feat.at(p + ".w"), feat.at(p + ".b"), 1, 1);
    x = relu(tape, x);
    x = avg_pool2d(tape, x, 2, 2);
  }
  return x;
}

template <typename T>
Tensor<T> feat_forward(Tape<T>* tape, const ParamSet<T>& feat, const Tensor<T>& img,
                       const NetConfig& cfg) {
  return feat_forward_stages(tape, feat, img, cfg, cfg.feat_stages);
}

template <typename T>
Tensor<T> head_forward(Tape<T>* tape, const ParamSet<T>& head, const Tensor<T>& feat,
                       const NetConfig& cfg) {
  if (cfg.task_kind == TaskKind::classification) {
    Tensor<T> pooled = global_avg_pool(tape, feat);
    return linear(tape, pooled, head.at("fc.w"), head.at("fc.b"));
  }
  Tensor<T> logits = conv2d(tape, feat, head.at("conv.w"), head.at("conv.b"), 1, 0);
  return upsample_bilinear(tape, logits, 1 << cfg.feat_stages);
}

namespace {

template <typename T>
Tensor<T> kaiming_conv(Rng& rng, int co, int ci, int k) {
  const double bound = std::sqrt(6.0 / (double(ci) * k * k));
  Tensor<T> w(Shape{co, ci, k, k});
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = T(rng.uniform(-bound, bound));
  return w;
}

template <typename T>
Tensor<T> kaiming_linear(Rng& rng, int d, int k) {
  const double bound = std::sqrt(6.0 / double(d));
  Tensor<T> w(Shape{d, k});
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = T(rng.uniform(-bound, bound));
  return w;
}

}  // namespace

template <typename T>
void init_params(const NetConfig& cfg, uint64_t seed, ParamSet<T>& sr, ParamSet<T>& feat,
                 ParamSet<T>& head) {
  cfg.validate();
  Rng rng(stream_seed(seed, "init"));
  const int C = cfg.sr_channels;

  sr = ParamSet<T>{};
  sr.add("head.w", kaiming_conv<T>(rng, C, 3, 3));
  sr.add("head.b", Tensor<T>(Shape{C}));
  for (int i = 0; i < cfg.sr_blocks; ++i) {
    const std::string p = "block" + std::to_string(i);
    sr.add(p + ".c1.w", kaiming_conv<T>(rng, C, C, 3));
    sr.add(p + ".c1.b", Tensor<T>(Shape{C}));
    sr.add(p + ".c2.w", kaiming_conv<T>(rng, C, C, 3));
    sr.add(p + ".c2.b", Tensor<T>(Shape{C}));
  }
  for (int j = 0; j < upsample_stages(cfg.scale); ++j) {
    const std::string p = "up" + std::to_string(j);
    sr.add(p + ".w", kaiming_conv<T>(rng, 4 * C, C, 3));
    sr.add(p + ".b", Tensor<T>(Shape{4 * C}));
  }
  // zero tail: at init the SR output equals the bilinear skip
  sr.add("tail.w", Tensor<T>(Shape{3, C, 3, 3}));
  sr.add("tail.b", Tensor<T>(Shape{3}));

  feat = ParamSet<T>{};
  for (int i = 0; i < cfg.feat_stages; ++i) {
    const std::string p = "stage" + std::to_string(i);
    const int ci = i == 0 ? 3 : cfg.feat_channels;
    feat.add(p + ".w", kaiming_conv<T>(rng, cfg.feat_channels, ci, 3));
    feat.add(p + ".b", Tensor<T>(Shape{cfg.feat_channels}));
  }

  head = ParamSet<T>{};
  const int fc = cfg.feat_stages == 0 ? 3 : cfg.feat_channels;
  if (cfg.task_kind == TaskKind::classification) {
    head.add("fc.w", kaiming_linear<T>(rng, fc, cfg.head_classes()));
    head.add("fc.b", Tensor<T>(Shape{cfg.head_classes()}));
  } else {
    head.add("conv.w", kaiming_conv<T>(rng, cfg.head_classes(), fc, 1));
    head.add("conv.b", Tensor<T>(Shape{cfg.head_classes()}));
  }
}

#define SR4IR_INSTANTIATE_NETS(T)                                                            \
  template struct ParamSet<T>;                                                               \
  template Tensor<T> sr_forward<T>(Tape<T>*, const ParamSet<T>&, const Tensor<T>&,           \
                                   const NetConfig&);                                        \
  template Tensor<T> feat_forward<T>(Tape<T>*, const ParamSet<T>&, const Tensor<T>&,         \
                                     const NetConfig&);                                      \
  template Tensor<T> feat_forward_stages<T>(Tape<T>*, const ParamSet<T>&, const Tensor<T>&,  \
                                            const NetConfig&, int);                         \
  template Tensor<T> head_forward<T>(Tape<T>*, const ParamSet<T>&, const Tensor<T>&,         \
                                     const NetConfig&);                                      \
  template void init_params<T>(const NetConfig&, uint64_t, ParamSet<T>&, ParamSet<T>&,       \
                               ParamSet<T>&);

SR4IR_INSTANTIATE_NETS(float)
SR4IR_INSTANTIATE_NETS(double)

}  // namespace sr4ir
