#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fragnet/ops.hpp"

namespace fragnet {

// Feature extraction network: conv+BN+ReLU+maxpool blocks, then a fully
// connected layer with batchnorm and no activation.
struct FenConfig {
  std::size_t input_side = 96;
  std::size_t input_channels = 3;
  std::vector<std::size_t> block_channels{32, 64, 128, 256, 512};
  std::size_t feature_dim = 512;

  static FenConfig full();
  // 32x32 input, blocks [8, 16, 32], 64 features.
  static FenConfig desk();

  void validate() const;
  std::size_t final_side() const;
  std::size_t flattened_dim() const;
  bool operator==(const FenConfig&) const = default;
};

// One row of the layer/shape/parameter table. Parameter counts include the
// batchnorm running statistics (4 values per channel), as Keras reports them.
struct LayerSummary {
  std::string layer;
  Shape shape;
  std::size_t parameters = 0;
};

std::vector<LayerSummary> fen_layer_table(const FenConfig& cfg);

template <std::floating_point T>
struct ConvBlockParams {
  BasicTensor<T> weight;  // [3, 3, Cin, Cout]; no bias, batchnorm beta covers it
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormState<T> bn;
};

template <std::floating_point T>
struct FenParams {
  std::vector<ConvBlockParams<T>> blocks;
  BasicTensor<T> fc_weight;  // [flattened_dim, feature_dim]
  BasicTensor<T> fc_gamma;
  BasicTensor<T> fc_beta;
  BatchNormState<T> fc_bn;

  // He-uniform weights, gamma = 1, beta = 0.
  static FenParams init(const FenConfig& cfg, std::mt19937_64& rng);
};

// fragments: [side, side, C] or [N, side, side, C]; returns [D] or [N, D].
// When `trace` is given, the shape after every layer is appended to it.
template <std::floating_point T>
BasicTensor<T> fen_forward(const FenConfig& cfg, FenParams<T>& params,
                           const BasicTensor<T>& fragments, Mode mode,
                           std::vector<Shape>* trace = nullptr);

// Runs both batches through the same parameters in one pass (a single
// batchnorm batch of 2N) and splits the result.
template <std::floating_point T>
std::pair<BasicTensor<T>, BasicTensor<T>> fen_shared_apply(const FenConfig& cfg,
                                                           FenParams<T>& params,
                                                           const BasicTensor<T>& first,
                                                           const BasicTensor<T>& second,
                                                           Mode mode);

// Uniform in +-sqrt(6 / fan_in).
Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace fragnet
