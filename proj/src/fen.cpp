#include "fragnet/fen.hpp"

#include <cmath>

namespace fragnet {

FenConfig FenConfig::full() { return FenConfig{}; }

FenConfig FenConfig::desk() {
  FenConfig cfg;
  cfg.input_side = 32;
  cfg.block_channels = {8, 16, 32};
  cfg.feature_dim = 64;
  return cfg;
}

void FenConfig::validate() const {
  if (block_channels.empty()) throw ContractError("fen: block_channels is empty");
  if (block_channels.size() >= 8 * sizeof(std::size_t)) throw ContractError("fen: too many blocks");
  if (input_side == 0 || input_channels == 0 || feature_dim == 0) {
    throw ContractError("fen: input_side, input_channels and feature_dim must be positive");
  }
  for (std::size_t c : block_channels) {
    if (c == 0) throw ContractError("fen: block channel count must be positive");
  }
  const std::size_t divisor = std::size_t{1} << block_channels.size();
  if (input_side % divisor != 0) {
    throw ContractError("fen: input_side " + std::to_string(input_side) +
                        " is not divisible by 2^" + std::to_string(block_channels.size()));
  }
}

std::size_t FenConfig::final_side() const {
  return input_side >> block_channels.size();
}

std::size_t FenConfig::flattened_dim() const {
  return final_side() * final_side() * block_channels.back();
}

std::vector<LayerSummary> fen_layer_table(const FenConfig& cfg) {
  cfg.validate();
  std::vector<LayerSummary> rows;
  rows.push_back({"Input", {cfg.input_side, cfg.input_side, cfg.input_channels}, 0});
  std::size_t side = cfg.input_side;
  std::size_t in_ch = cfg.input_channels;
  for (std::size_t out_ch : cfg.block_channels) {
    rows.push_back({"Conv+BN+ReLU", {side, side, out_ch}, 9 * in_ch * out_ch + 4 * out_ch});
    side /= 2;
    rows.push_back({"Maxpooling", {side, side, out_ch}, 0});
    in_ch = out_ch;
  }
  rows.push_back({"Fully Connected+BN", {cfg.feature_dim},
                  cfg.flattened_dim() * cfg.feature_dim + 4 * cfg.feature_dim});
  return rows;
}

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

namespace {

template <std::floating_point T>
BasicTensor<T> as_param(const Tensor& t) {
  return cast<T>(t);
}

}  // namespace

template <std::floating_point T>
FenParams<T> FenParams<T>::init(const FenConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  FenParams params;
  std::size_t in_ch = cfg.input_channels;
  for (std::size_t out_ch : cfg.block_channels) {
    ConvBlockParams<T> block;
    block.weight = as_param<T>(he_uniform({3, 3, in_ch, out_ch}, 9 * in_ch, rng));
    block.gamma = BasicTensor<T>::full({out_ch}, T(1), true);
    block.beta = BasicTensor<T>::zeros({out_ch}, true);
    block.bn = BatchNormState<T>::create(out_ch);
    params.blocks.push_back(std::move(block));
    in_ch = out_ch;
  }
  params.fc_weight =
      as_param<T>(he_uniform({cfg.flattened_dim(), cfg.feature_dim}, cfg.flattened_dim(), rng));
  params.fc_gamma = BasicTensor<T>::full({cfg.feature_dim}, T(1), true);
  params.fc_beta = BasicTensor<T>::zeros({cfg.feature_dim}, true);
  params.fc_bn = BatchNormState<T>::create(cfg.feature_dim);
  return params;
}

template <std::floating_point T>
BasicTensor<T> fen_forward(const FenConfig& cfg, FenParams<T>& params,
                           const BasicTensor<T>& fragments, Mode mode, std::vector<Shape>* trace) {
  cfg.validate();
  if (!fragments.defined()) throw ContractError("fen_forward: fragments undefined");
  const bool single = fragments.rank() == 3;
  if (!single && fragments.rank() != 4) {
    throw ContractError("fen_forward: fragments must be [S,S,C] or [N,S,S,C], got " +
                        shape_str(fragments.shape()));
  }
  const Shape& s = fragments.shape();
  const std::size_t off = single ? 0 : 1;
  if (s[off] != cfg.input_side || s[off + 1] != cfg.input_side || s[off + 2] != cfg.input_channels) {
    throw ContractError("fen_forward: fragment shape " + shape_str(s) + " does not match input " +
                        std::to_string(cfg.input_side) + "x" + std::to_string(cfg.input_side) +
                        "x" + std::to_string(cfg.input_channels));
  }
  if (params.blocks.size() != cfg.block_channels.size()) {
    throw ContractError("fen_forward: parameter set has " + std::to_string(params.blocks.size()) +
                        " blocks, config has " + std::to_string(cfg.block_channels.size()));
  }

  const auto record = [trace](const BasicTensor<T>& t) {
    if (!trace) return;
    Shape shape = t.shape();
    shape.erase(shape.begin());
    trace->push_back(std::move(shape));
  };

  BasicTensor<T> x = single ? reshape(fragments, Shape{1, s[0], s[1], s[2]}) : fragments;
  record(x);
  for (ConvBlockParams<T>& block : params.blocks) {
    x = relu(batchnorm(conv3x3(x, block.weight), block.gamma, block.beta, block.bn, mode));
    record(x);
    x = maxpool2(x);
    record(x);
  }
  x = flatten(x);
  x = batchnorm(dense(x, params.fc_weight), params.fc_gamma, params.fc_beta, params.fc_bn, mode);
  record(x);
  return single ? reshape(x, Shape{cfg.feature_dim}) : x;
}

template <std::floating_point T>
std::pair<BasicTensor<T>, BasicTensor<T>> fen_shared_apply(const FenConfig& cfg,
                                                           FenParams<T>& params,
                                                           const BasicTensor<T>& first,
                                                           const BasicTensor<T>& second,
                                                           Mode mode) {
  if (!first.defined() || !second.defined()) throw ContractError("fen_shared_apply: undefined input");
  if (first.shape() != second.shape()) {
    throw ContractError("fen_shared_apply: branch shapes differ: " + shape_str(first.shape()) +
                        " vs " + shape_str(second.shape()));
  }
  if (first.rank() == 3) {
    const Shape batched{1, first.dim(0), first.dim(1), first.dim(2)};
    auto [a, b] = fen_shared_apply(cfg, params, reshape(first, batched), reshape(second, batched), mode);
    return {reshape(a, Shape{cfg.feature_dim}), reshape(b, Shape{cfg.feature_dim})};
  }
  const std::size_t n = first.dim(0);
  BasicTensor<T> features = fen_forward(cfg, params, concat_batch(first, second), mode);
  return {slice_batch(features, 0, n), slice_batch(features, n, 2 * n)};
}

template struct FenParams<float>;
template struct FenParams<double>;
template BasicTensor<float> fen_forward(const FenConfig&, FenParams<float>&, const BasicTensor<float>&,
                                        Mode, std::vector<Shape>*);
template BasicTensor<double> fen_forward(const FenConfig&, FenParams<double>&,
                                         const BasicTensor<double>&, Mode, std::vector<Shape>*);
template std::pair<BasicTensor<float>, BasicTensor<float>> fen_shared_apply(
    const FenConfig&, FenParams<float>&, const BasicTensor<float>&, const BasicTensor<float>&, Mode);
template std::pair<BasicTensor<double>, BasicTensor<double>> fen_shared_apply(
    const FenConfig&, FenParams<double>&, const BasicTensor<double>&, const BasicTensor<double>&,
    Mode);

}  // namespace fragnet
