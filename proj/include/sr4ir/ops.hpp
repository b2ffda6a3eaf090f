#pragma once

#include <vector>

#include "sr4ir/tensor.hpp"

namespace sr4ir {

// Differentiable ops. Every op takes the tape as its first argument; pass
// nullptr to run without recording (inference / stop-gradient branches).
// Forward values are identical either way. No broadcasting beyond the bias
// add inside conv2d/linear and the channel broadcast inside mask_mix; any
// other shape mismatch is an error.

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T s);

// elementwise a*x + b
template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& x, T a, T b);

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

// hard clamp to [0,1]; gradient passes only through the interior
template <typename T>
Tensor<T> clamp01(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad);

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> avg_pool2d(Tape<T>* tape, const Tensor<T>& x, int k, int stride);

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> pixel_shuffle(Tape<T>* tape, const Tensor<T>& x, int r);

template <typename T>
Tensor<T> upsample_bilinear(Tape<T>* tape, const Tensor<T>& x, int scale);

template <typename T>
Tensor<T> concat_batch(Tape<T>* tape, const std::vector<Tensor<T>>& xs);

// mask [B,1,H,W] in {0,1}, broadcast over channels: mask*a + (1-mask)*b
template <typename T>
Tensor<T> mask_mix(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask);

// element-mean |a-b|; subgradient sign(0)=0
template <typename T>
Tensor<T> l1_loss(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

// logits [B,C] with labels [B], or [B,C,H,W] with labels [B,H,W];
// mean negative log-softmax of the true class, max-stabilized
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits, const IntTensor& labels);

}  // namespace sr4ir
