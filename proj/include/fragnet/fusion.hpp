#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fragnet/ops.hpp"
#include "fragnet/sampler.hpp"

namespace fragnet {

enum class FusionKind { Concat, Kronecker };

const char* fusion_name(FusionKind kind);
// Accepts "concat", "kron" and "kronecker".
FusionKind parse_fusion(const std::string& name);

struct FusionConfig {
  FusionKind kind = FusionKind::Kronecker;
  std::size_t feature_dim = 512;
  std::vector<std::size_t> hidden_dims{512, 512};
  std::size_t num_classes = kNumClasses;

  static FusionConfig full(FusionKind kind = FusionKind::Kronecker);
  // feature_dim 64, hidden [128, 128].
  static FusionConfig desk(FusionKind kind = FusionKind::Kronecker);

  void validate() const;
  // Width of the combined vector fed to the first hidden layer.
  std::size_t combined_dim() const;
  bool operator==(const FusionConfig&) const = default;
};

template <std::floating_point T>
struct HiddenLayerParams {
  BasicTensor<T> weight;  // no bias, batchnorm follows
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormState<T> bn;
};

template <std::floating_point T>
struct FusionParams {
  std::vector<HiddenLayerParams<T>> hidden;
  BasicTensor<T> out_weight;  // [hidden_dims.back(), num_classes]
  BasicTensor<T> out_bias;

  // With zero_output the final layer starts at zero, i.e. a uniform prediction.
  static FusionParams init(const FusionConfig& cfg, std::mt19937_64& rng, bool zero_output = false);
};

template <std::floating_point T>
BasicTensor<T> combine_concat(const BasicTensor<T>& phi1, const BasicTensor<T>& phi2) {
  return concat_features(phi1, phi2);
}

template <std::floating_point T>
BasicTensor<T> combine_kronecker(const BasicTensor<T>& phi1, const BasicTensor<T>& phi2) {
  return kronecker_features(phi1, phi2);
}

template <std::floating_point T>
BasicTensor<T> combine(FusionKind kind, const BasicTensor<T>& phi1, const BasicTensor<T>& phi2) {
  return kind == FusionKind::Concat ? combine_concat(phi1, phi2) : combine_kronecker(phi1, phi2);
}

// Hidden dense+BN+ReLU stack, then dense to num_classes logits. Input is
// [combined_dim] or [N, combined_dim].
template <std::floating_point T>
BasicTensor<T> classify_logits(const FusionConfig& cfg, FusionParams<T>& params,
                               const BasicTensor<T>& combined, Mode mode);

// softmax(classify_logits(...)).
template <std::floating_point T>
BasicTensor<T> classify(const FusionConfig& cfg, FusionParams<T>& params,
                        const BasicTensor<T>& combined, Mode mode);

}  // namespace fragnet
