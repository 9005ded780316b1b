#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fragnet/tensor.hpp"

namespace fragnet {

// Running statistics of one batchnorm layer. Not trained by SGD; updated as a
// side effect of train-mode forward passes.
template <std::floating_point T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T momentum = T(0.9);
  T epsilon = T(1e-5);

  static BatchNormState create(std::size_t features);
};

// Layout is channels-last throughout: images are [H, W, C] or [N, H, W, C].

// 3x3 convolution with zero same-padding. weight is [3, 3, Cin, Cout]; bias is
// [Cout] or undefined.
template <std::floating_point T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias = {});

// 2x2 max pooling, stride 2. Gradient goes to the first maximal cell of each
// window in row-major order.
template <std::floating_point T>
BasicTensor<T> maxpool2(const BasicTensor<T>& input);

// Nearest-neighbour 2x upsampling (each cell duplicated into a 2x2 block).
template <std::floating_point T>
BasicTensor<T> upsample2(const BasicTensor<T>& input);

// Per-feature normalization over every axis but the last. Input is [N, F] or
// [N, H, W, C]. Train mode uses batch statistics (biased variance) and updates
// `state`; infer mode reads `state`.
template <std::floating_point T>
BasicTensor<T> batchnorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode);

// Affine map: [N, F] x [F, G] (+ [G]) -> [N, G]. A rank-1 input is one row.
template <std::floating_point T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias = {});

template <std::floating_point T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Softmax over the last axis of a rank-1 or rank-2 tensor.
template <std::floating_point T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Mean of -ln p[label] over rows. When `probs` came straight out of softmax
// the loss is evaluated from the logits (log-sum-exp) and the backward rule
// is the fused p - onehot.
template <std::floating_point T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels);

// [a || b] along the last axis.
template <std::floating_point T>
BasicTensor<T> concat_features(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Row-wise outer product flattened row-major: out[m * D + n] = a[m] * b[n].
template <std::floating_point T>
BasicTensor<T> kronecker_features(const BasicTensor<T>& a, const BasicTensor<T>& b);

// [N, ...] -> [N, prod(...)]
template <std::floating_point T>
BasicTensor<T> flatten(const BasicTensor<T>& input);

template <std::floating_point T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

// Stacks equally shaped tensors along a new leading axis.
template <std::floating_point T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> items);

// Concatenation along axis 0.
template <std::floating_point T>
BasicTensor<T> concat_batch(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Rows [begin, end) along axis 0.
template <std::floating_point T>
BasicTensor<T> slice_batch(const BasicTensor<T>& input, std::size_t begin, std::size_t end);

template <std::floating_point T>
BasicTensor<T> sum(const BasicTensor<T>& input);

template <std::floating_point T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <std::floating_point T>
BasicTensor<T> square(const BasicTensor<T>& input);

template <std::floating_point T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor);

// Leaf copy converted to another precision. Keeps requires_grad.
template <std::floating_point To, std::floating_point From>
BasicTensor<To> cast(const BasicTensor<From>& input) {
  if (!input.defined()) return {};
  std::vector<To> out(input.values().begin(), input.values().end());
  return BasicTensor<To>(input.shape(), std::move(out), input.requires_grad());
}

}  // namespace fragnet
