#include "fragnet/network.hpp"

#include <json.hpp>

namespace fragnet {

ModelConfig ModelConfig::full(FusionKind kind) {
  return {FenConfig::full(), FusionConfig::full(kind)};
}

ModelConfig ModelConfig::desk(FusionKind kind) {
  return {FenConfig::desk(), FusionConfig::desk(kind)};
}

void ModelConfig::validate() const {
  fen.validate();
  fusion.validate();
  if (fen.feature_dim != fusion.feature_dim) {
    throw ContractError("model: fen feature_dim " + std::to_string(fen.feature_dim) +
                        " differs from fusion feature_dim " + std::to_string(fusion.feature_dim));
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["fen"] = {{"input_side", fen.input_side},
              {"input_channels", fen.input_channels},
              {"block_channels", fen.block_channels},
              {"feature_dim", fen.feature_dim}};
  j["fusion"] = {{"kind", fusion_name(fusion.kind)},
                 {"feature_dim", fusion.feature_dim},
                 {"hidden_dims", fusion.hidden_dims},
                 {"num_classes", fusion.num_classes}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig cfg;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    const auto& f = j.at("fen");
    cfg.fen.input_side = f.at("input_side").get<std::size_t>();
    cfg.fen.input_channels = f.at("input_channels").get<std::size_t>();
    cfg.fen.block_channels = f.at("block_channels").get<std::vector<std::size_t>>();
    cfg.fen.feature_dim = f.at("feature_dim").get<std::size_t>();
    const auto& h = j.at("fusion");
    cfg.fusion.kind = parse_fusion(h.at("kind").get<std::string>());
    cfg.fusion.feature_dim = h.at("feature_dim").get<std::size_t>();
    cfg.fusion.hidden_dims = h.at("hidden_dims").get<std::vector<std::size_t>>();
    cfg.fusion.num_classes = h.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  return cfg;
}

template <std::floating_point T>
PairNetwork<T>::PairNetwork(ModelConfig config, std::uint64_t seed, bool zero_output)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  fen_ = FenParams<T>::init(config_.fen, rng);
  head_ = FusionParams<T>::init(config_.fusion, rng, zero_output);
}

template <std::floating_point T>
BasicTensor<T> PairNetwork<T>::logits(const BasicTensor<T>& central, const BasicTensor<T>& neighbor,
                                      Mode mode) {
  auto [phi1, phi2] = fen_shared_apply(config_.fen, fen_, central, neighbor, mode);
  return classify_logits(config_.fusion, head_, combine(config_.fusion.kind, phi1, phi2), mode);
}

template <std::floating_point T>
BasicTensor<T> PairNetwork<T>::probabilities(const BasicTensor<T>& central,
                                             const BasicTensor<T>& neighbor, Mode mode) {
  return softmax(logits(central, neighbor, mode));
}

template <std::floating_point T>
std::vector<NamedTensor<T>> PairNetwork<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < fen_.blocks.size(); ++i) {
    const std::string prefix = "fen.block" + std::to_string(i) + ".";
    out.push_back({prefix + "conv.weight", fen_.blocks[i].weight});
    out.push_back({prefix + "bn.gamma", fen_.blocks[i].gamma});
    out.push_back({prefix + "bn.beta", fen_.blocks[i].beta});
  }
  out.push_back({"fen.fc.weight", fen_.fc_weight});
  out.push_back({"fen.fc.bn.gamma", fen_.fc_gamma});
  out.push_back({"fen.fc.bn.beta", fen_.fc_beta});
  for (std::size_t i = 0; i < head_.hidden.size(); ++i) {
    const std::string prefix = "head.hidden" + std::to_string(i) + ".";
    out.push_back({prefix + "weight", head_.hidden[i].weight});
    out.push_back({prefix + "bn.gamma", head_.hidden[i].gamma});
    out.push_back({prefix + "bn.beta", head_.hidden[i].beta});
  }
  out.push_back({"head.out.weight", head_.out_weight});
  out.push_back({"head.out.bias", head_.out_bias});
  return out;
}

template <std::floating_point T>
std::vector<NamedTensor<T>> PairNetwork<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  const auto add = [&out](const std::string& prefix, BatchNormState<T>& bn) {
    out.push_back({prefix + "bn.running_mean", bn.running_mean});
    out.push_back({prefix + "bn.running_var", bn.running_var});
  };
  for (std::size_t i = 0; i < fen_.blocks.size(); ++i) {
    add("fen.block" + std::to_string(i) + ".", fen_.blocks[i].bn);
  }
  add("fen.fc.", fen_.fc_bn);
  for (std::size_t i = 0; i < head_.hidden.size(); ++i) {
    add("head.hidden" + std::to_string(i) + ".", head_.hidden[i].bn);
  }
  return out;
}

template <std::floating_point T>
std::vector<NamedTensor<T>> PairNetwork<T>::state() {
  std::vector<NamedTensor<T>> out = parameters();
  std::vector<NamedTensor<T>> extra = buffers();
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

template <std::floating_point T>
std::size_t PairNetwork<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <std::floating_point T>
void PairNetwork<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <std::floating_point T>
void PairNetwork<T>::reinitialize_head(FusionKind kind, std::uint64_t seed) {
  config_.fusion.kind = kind;
  std::mt19937_64 rng(seed);
  head_ = FusionParams<T>::init(config_.fusion, rng);
}

namespace {

template <std::floating_point U, std::floating_point T>
BatchNormState<U> cast_bn(const BatchNormState<T>& bn) {
  BatchNormState<U> out;
  out.running_mean = cast<U>(bn.running_mean);
  out.running_var = cast<U>(bn.running_var);
  out.momentum = static_cast<U>(bn.momentum);
  out.epsilon = static_cast<U>(bn.epsilon);
  return out;
}

}  // namespace

template <std::floating_point T>
template <std::floating_point U>
PairNetwork<U> PairNetwork<T>::cast() const {
  PairNetwork<U> out;
  out.config_ = config_;
  for (const auto& b : fen_.blocks) {
    out.fen_.blocks.push_back({fragnet::cast<U>(b.weight), fragnet::cast<U>(b.gamma),
                               fragnet::cast<U>(b.beta), cast_bn<U>(b.bn)});
  }
  out.fen_.fc_weight = fragnet::cast<U>(fen_.fc_weight);
  out.fen_.fc_gamma = fragnet::cast<U>(fen_.fc_gamma);
  out.fen_.fc_beta = fragnet::cast<U>(fen_.fc_beta);
  out.fen_.fc_bn = cast_bn<U>(fen_.fc_bn);
  for (const auto& h : head_.hidden) {
    out.head_.hidden.push_back({fragnet::cast<U>(h.weight), fragnet::cast<U>(h.gamma),
                                fragnet::cast<U>(h.beta), cast_bn<U>(h.bn)});
  }
  out.head_.out_weight = fragnet::cast<U>(head_.out_weight);
  out.head_.out_bias = fragnet::cast<U>(head_.out_bias);
  return out;
}

template class PairNetwork<float>;
template class PairNetwork<double>;
template PairNetwork<double> PairNetwork<float>::cast<double>() const;
template PairNetwork<float> PairNetwork<float>::cast<float>() const;

}  // namespace fragnet
