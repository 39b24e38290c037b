#pragma once

#include <vector>

#include "hdcam/tensor.hpp"

// Differentiable tensor operations. Each op computes its output through the
// kernel layer and, when a tape is active and any input carries gradients,
// records one backward rule. All ops are pure value functions; none mutate
// their inputs.
//
// Shape conventions: a sample is row-major [length, channels]; training adds
// a leading batch axis [batch, length, channels]. Ops that act on the channel
// (last) axis accept any leading shape.

namespace hdcam::ops {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T constant);

// y[..., c] = x[..., c] * gain[c]
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gain);

// A[m,k] * B[k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// x[..., Cin] * W[Cin, Cout] + b -> [..., Cout]; b may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// x[(B,)L,Cin], weight[K, Cin/groups, Cout], bias[Cout] (optional).
// Lout = floor((L + 2*padding - K)/stride) + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding, int groups);

// Normalizes over the last (channel) axis; gamma/beta optional.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps);

// Exact-erf form: y = x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Row softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, int s);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// Mean over the length axis: [..., L, C] -> [..., C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Mean over the batch of -log softmax(logits)[label], fused log-sum-exp.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Per-head scaled dot-product self-attention core. q/k/v are [(B,)L,C] with C
// divisible by heads; head i uses channel slice [i*d, (i+1)*d), d = C/heads.
// When probs_out is non-null it receives the attention weights
// [(B,)heads, L, L] (forward values, detached from the tape).
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, int heads,
                               Tensor<T>* probs_out = nullptr);

}  // namespace hdcam::ops
