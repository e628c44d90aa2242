#pragma once

#include <vector>

#include "sws/tensor.hpp"

namespace sws {

// Primitives recorded on the autograd graph. All are instantiated for float
// (training) and double (gradient checking). Batch dimensions are leftmost.

/// a[m x k] * b[k x n]
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[..., k] * w[k x n] + bias[n]; bias may be undefined.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias);

/// Batched a[B x m x k] * b[B x k x n].
template <class T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Batched a[B x m x k] * b[B x n x k]^T.
template <class T>
BasicTensor<T> bmm_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x + y where y's shape equals the trailing dimensions of x.
template <class T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& x, const BasicTensor<T>& y);

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// Softmax over the last axis with max subtraction.
template <class T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);

/// Per-row normalization (population variance) followed by gamma/beta.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps = T(1e-6));

/// x * Phi(x) with the erf-based Gaussian CDF.
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

/// Log values are clamped from below at this constant inside soft_cross_entropy.
inline constexpr double kLogClamp = -30.0;

/// mean_b( -sum_c p[b,c] * max(log q[b,c], -30) ) for row-distributions p, q.
template <class T>
BasicTensor<T> soft_cross_entropy(const BasicTensor<T>& p, const BasicTensor<T>& q);

/// Columns [offset, offset + length) of the last axis.
template <class T>
BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t offset, std::size_t length);

/// [B x N x heads*dk] -> [B*heads x N x dk]
template <class T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::size_t heads);

/// [B*heads x N x dk] -> [B x N x heads*dk]
template <class T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::size_t heads);

/// Prepends token[1 x d] to every sequence of x[B x N x d].
template <class T>
BasicTensor<T> prepend_token(const BasicTensor<T>& token, const BasicTensor<T>& x);

/// x[B x N x d] -> x[:, index, :] as [B x d]
template <class T>
BasicTensor<T> select_token(const BasicTensor<T>& x, std::size_t index);

/// images[B x C x H x W] -> [B x (H/p)(W/p) x C*p*p], patches row-major, each
/// flattened channel-major.
template <class T>
BasicTensor<T> patchify(const BasicTensor<T>& images, std::size_t patch);

/// Constant one-hot rows [B x classes].
template <class T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t classes);

}  // namespace sws
