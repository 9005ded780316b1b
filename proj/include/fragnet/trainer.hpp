#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fragnet/image.hpp"
#include "fragnet/network.hpp"
#include "fragnet/predictor.hpp"
#include "fragnet/sampler.hpp"

namespace fragnet {

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.0;  // plain SGD unless set
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  SamplerConfig sampler;

  void validate() const;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

// Everything a checkpoint carries: weights, running stats, epoch, RNG.
struct TrainingState {
  PairNetwork<float> network;
  std::size_t epoch = 0;
  std::mt19937_64 rng;

  TrainingState(ModelConfig config, std::uint64_t seed, bool zero_output = false);
};

// w <- w - lr * v, v <- momentum * v + grad (v = grad when momentum is 0).
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum = 0.0);
  void step(std::span<NamedTensor<float>> parameters);

 private:
  float learning_rate_;
  float momentum_;
  std::vector<std::vector<float>> velocity_;
};

// One pass over `frames` in a seeded shuffled order, with fresh pairs sampled
// for every image. Returns the mean training loss over batches.
double train_epoch(TrainingState& state, std::span<const ImageRGB> frames, const TrainConfig& cfg,
                   SgdOptimizer& optimizer);

// The frozen validation set: image i contributes one pair drawn from an RNG
// seeded with seed ^ i.
std::vector<PairSample> validation_pairs(std::span<const ImageRGB> frames,
                                         const SamplerConfig& sampler, std::uint64_t seed);

// Fraction of pairs whose argmax matches the label.
double pair_accuracy(const PairPredictor& predictor, std::span<const PairSample> pairs,
                     std::size_t batch = 64);

double evaluate(const PairPredictor& predictor, std::span<const ImageRGB> frames,
                const SamplerConfig& sampler, std::uint64_t seed);

using EpochCallback = std::function<void(const MetricsRecord&)>;

// Runs cfg.epochs epochs, evaluating after each. Stops early once validation
// accuracy reaches `stop_at` when given.
std::vector<MetricsRecord> fit(TrainingState& state, std::span<const ImageRGB> train_frames,
                               std::span<const ImageRGB> validation_frames, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {},
                               std::optional<double> stop_at = std::nullopt);

// Metrics log: "epoch,train_loss,val_accuracy".
inline constexpr const char* kMetricsHeader = "epoch,train_loss,val_accuracy";
std::string format_metrics_row(const MetricsRecord& record);
void append_metrics(const std::filesystem::path& path, const MetricsRecord& record);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// Side-by-side validation accuracy per epoch:
// "epoch,concat_val_accuracy,kron_val_accuracy". Missing epochs are blank.
std::string fusion_comparison_csv(std::span<const MetricsRecord> concat,
                                  std::span<const MetricsRecord> kron);

}  // namespace fragnet
