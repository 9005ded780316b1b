#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fragnet/fen.hpp"
#include "fragnet/fusion.hpp"

namespace fragnet {

struct ModelConfig {
  FenConfig fen;
  FusionConfig fusion;

  static ModelConfig full(FusionKind kind = FusionKind::Kronecker);
  static ModelConfig desk(FusionKind kind = FusionKind::Kronecker);

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

// Shared feature extractor, combination layer and classification head.
template <std::floating_point T>
class PairNetwork {
 public:
  PairNetwork(ModelConfig config, std::uint64_t seed, bool zero_output = false);

  const ModelConfig& config() const noexcept { return config_; }
  FenParams<T>& fen() noexcept { return fen_; }
  FusionParams<T>& head() noexcept { return head_; }

  // central, neighbor: [N, S, S, 3]. Returns [N, 8] logits.
  BasicTensor<T> logits(const BasicTensor<T>& central, const BasicTensor<T>& neighbor, Mode mode);
  BasicTensor<T> probabilities(const BasicTensor<T>& central, const BasicTensor<T>& neighbor,
                               Mode mode);

  // Trainable tensors, in a fixed order.
  std::vector<NamedTensor<T>> parameters();
  // Batchnorm running statistics.
  std::vector<NamedTensor<T>> buffers();
  // parameters() followed by buffers(); the checkpoint record order.
  std::vector<NamedTensor<T>> state();

  std::size_t parameter_count();
  void zero_grad();

  // Fresh head for a new fusion kind; the feature extractor is kept.
  void reinitialize_head(FusionKind kind, std::uint64_t seed);

  // Deep copy at another precision.
  template <std::floating_point U>
  PairNetwork<U> cast() const;

 private:
  template <std::floating_point>
  friend class PairNetwork;
  PairNetwork() = default;

  ModelConfig config_;
  FenParams<T> fen_;
  FusionParams<T> head_;
};

}  // namespace fragnet
