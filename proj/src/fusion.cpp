#include "fragnet/fusion.hpp"

#include "fragnet/fen.hpp"

namespace fragnet {

const char* fusion_name(FusionKind kind) {
  return kind == FusionKind::Concat ? "concat" : "kron";
}

FusionKind parse_fusion(const std::string& name) {
  if (name == "concat") return FusionKind::Concat;
  if (name == "kron" || name == "kronecker") return FusionKind::Kronecker;
  throw ContractError("unknown fusion kind '" + name + "' (expected concat or kron)");
}

FusionConfig FusionConfig::full(FusionKind kind) {
  FusionConfig cfg;
  cfg.kind = kind;
  return cfg;
}

FusionConfig FusionConfig::desk(FusionKind kind) {
  FusionConfig cfg;
  cfg.kind = kind;
  cfg.feature_dim = 64;
  cfg.hidden_dims = {128, 128};
  return cfg;
}

void FusionConfig::validate() const {
  if (num_classes != kNumClasses) {
    throw ContractError("fusion: num_classes must be 8, got " + std::to_string(num_classes));
  }
  if (hidden_dims.empty()) throw ContractError("fusion: hidden_dims is empty");
  if (feature_dim == 0) throw ContractError("fusion: feature_dim must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ContractError("fusion: hidden layer width must be positive");
  }
}

std::size_t FusionConfig::combined_dim() const {
  return kind == FusionKind::Concat ? 2 * feature_dim : feature_dim * feature_dim;
}

template <std::floating_point T>
FusionParams<T> FusionParams<T>::init(const FusionConfig& cfg, std::mt19937_64& rng,
                                      bool zero_output) {
  cfg.validate();
  FusionParams params;
  std::size_t in = cfg.combined_dim();
  for (std::size_t width : cfg.hidden_dims) {
    HiddenLayerParams<T> layer;
    layer.weight = cast<T>(he_uniform({in, width}, in, rng));
    layer.gamma = BasicTensor<T>::full({width}, T(1), true);
    layer.beta = BasicTensor<T>::zeros({width}, true);
    layer.bn = BatchNormState<T>::create(width);
    params.hidden.push_back(std::move(layer));
    in = width;
  }
  if (zero_output) {
    params.out_weight = BasicTensor<T>::zeros({in, cfg.num_classes}, true);
  } else {
    params.out_weight = cast<T>(he_uniform({in, cfg.num_classes}, in, rng));
  }
  params.out_bias = BasicTensor<T>::zeros({cfg.num_classes}, true);
  return params;
}

template <std::floating_point T>
BasicTensor<T> classify_logits(const FusionConfig& cfg, FusionParams<T>& params,
                               const BasicTensor<T>& combined, Mode mode) {
  cfg.validate();
  if (!combined.defined()) throw ContractError("classify: combined input undefined");
  if (combined.shape().back() != cfg.combined_dim()) {
    throw ContractError("classify: combined dimension " + std::to_string(combined.shape().back()) +
                        " does not match " + std::to_string(cfg.combined_dim()) + " for " +
                        fusion_name(cfg.kind) + " fusion");
  }
  if (params.hidden.size() != cfg.hidden_dims.size()) {
    throw ContractError("classify: parameter set has " + std::to_string(params.hidden.size()) +
                        " hidden layers, config has " + std::to_string(cfg.hidden_dims.size()));
  }
  const bool single = combined.rank() == 1;
  BasicTensor<T> x = single ? reshape(combined, Shape{1, combined.numel()}) : combined;
  for (HiddenLayerParams<T>& layer : params.hidden) {
    x = relu(batchnorm(dense(x, layer.weight), layer.gamma, layer.beta, layer.bn, mode));
  }
  x = dense(x, params.out_weight, params.out_bias);
  return single ? reshape(x, Shape{cfg.num_classes}) : x;
}

template <std::floating_point T>
BasicTensor<T> classify(const FusionConfig& cfg, FusionParams<T>& params,
                        const BasicTensor<T>& combined, Mode mode) {
  return softmax(classify_logits(cfg, params, combined, mode));
}

template struct FusionParams<float>;
template struct FusionParams<double>;
template BasicTensor<float> classify_logits(const FusionConfig&, FusionParams<float>&,
                                            const BasicTensor<float>&, Mode);
template BasicTensor<double> classify_logits(const FusionConfig&, FusionParams<double>&,
                                             const BasicTensor<double>&, Mode);
template BasicTensor<float> classify(const FusionConfig&, FusionParams<float>&,
                                     const BasicTensor<float>&, Mode);
template BasicTensor<double> classify(const FusionConfig&, FusionParams<double>&,
                                      const BasicTensor<double>&, Mode);

}  // namespace fragnet
