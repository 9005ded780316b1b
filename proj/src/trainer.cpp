#include "fragnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "fragnet/ops.hpp"

namespace fragnet {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("train: learning rate must be a finite non-negative number");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("train: momentum must be in [0, 1)");
  if (batch_size < 2) throw ContractError("train: batch size must be at least 2 for batchnorm");
  if (epochs == 0) throw ContractError("train: epochs must be positive");
  sampler.validate();
}

TrainingState::TrainingState(ModelConfig config, std::uint64_t seed, bool zero_output)
    : network(std::move(config), seed, zero_output), rng(seed) {}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum)
    : learning_rate_(static_cast<float>(learning_rate)), momentum_(static_cast<float>(momentum)) {}

void SgdOptimizer::step(std::span<NamedTensor<float>> parameters) {
  if (momentum_ != 0.0f && velocity_.size() != parameters.size()) {
    velocity_.assign(parameters.size(), {});
  }
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    Tensor& p = parameters[i].tensor;
    if (!p.has_grad()) continue;
    std::span<float> w = p.mutable_values();
    std::span<const float> g = p.grad();
    if (momentum_ == 0.0f) {
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate_ * g[k];
      continue;
    }
    std::vector<float>& v = velocity_[i];
    if (v.empty()) v.assign(w.size(), 0.0f);
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      w[k] -= learning_rate_ * v[k];
    }
  }
}

namespace {

// Batch boundaries; a trailing batch of one is merged into its predecessor.
std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> bounds;
  for (std::size_t begin = 0; begin < n; begin += batch) {
    bounds.emplace_back(begin, std::min(n, begin + batch));
  }
  if (bounds.size() > 1 && bounds.back().second - bounds.back().first < 2) {
    const std::size_t end = bounds.back().second;
    bounds.pop_back();
    bounds.back().second = end;
  }
  return bounds;
}

}  // namespace

double train_epoch(TrainingState& state, std::span<const ImageRGB> frames, const TrainConfig& cfg,
                   SgdOptimizer& optimizer) {
  cfg.validate();
  if (frames.empty()) throw ContractError("empty dataset");
  if (frames.size() < 2) throw ContractError("training needs at least 2 images for batchnorm");

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state.rng);

  std::vector<NamedTensor<float>> params = state.network.parameters();
  double total_loss = 0.0;
  const auto bounds = batch_bounds(order.size(), cfg.batch_size);
  for (std::size_t b = 0; b < bounds.size(); ++b) {
    std::vector<PairSample> pairs;
    for (std::size_t i = bounds[b].first; i < bounds[b].second; ++i) {
      pairs.push_back(sample_pair(cfg.sampler, frames[order[i]], state.rng));
    }
    std::vector<const Fragment*> centrals, neighbors;
    std::vector<std::size_t> labels;
    for (const PairSample& p : pairs) {
      centrals.push_back(&p.central);
      neighbors.push_back(&p.neighbor);
      labels.push_back(p.label.index());
    }
    for (auto& p : params) p.tensor.zero_grad();
    try {
      const Tensor logits =
          state.network.logits(stack_pixels(centrals), stack_pixels(neighbors), Mode::Train);
      const Tensor loss = cross_entropy(softmax(logits), std::span<const std::size_t>(labels));
      loss.backward();
      for (const auto& p : params) {
        if (p.tensor.has_grad() && !std::all_of(p.tensor.grad().begin(), p.tensor.grad().end(),
                                                [](float g) { return std::isfinite(g); })) {
          throw NumericError("non-finite gradient for " + p.name);
        }
      }
      total_loss += loss.item();
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss at batch " + std::to_string(b) + " of epoch " +
                         std::to_string(state.epoch + 1) + ": " + e.what());
    }
    optimizer.step(params);
  }
  ++state.epoch;
  return total_loss / static_cast<double>(bounds.size());
}

std::vector<PairSample> validation_pairs(std::span<const ImageRGB> frames,
                                         const SamplerConfig& sampler, std::uint64_t seed) {
  std::vector<PairSample> pairs;
  pairs.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(i));
    pairs.push_back(sample_pair(sampler, frames[i], rng));
  }
  return pairs;
}

double pair_accuracy(const PairPredictor& predictor, std::span<const PairSample> pairs,
                     std::size_t batch) {
  if (pairs.empty()) throw ContractError("empty validation set");
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < pairs.size(); begin += batch) {
    const std::size_t end = std::min(pairs.size(), begin + batch);
    std::vector<const Fragment*> centrals, neighbors;
    for (std::size_t i = begin; i < end; ++i) {
      centrals.push_back(&pairs[i].central);
      neighbors.push_back(&pairs[i].neighbor);
    }
    const std::vector<LocationDistribution> dists = predictor(centrals, neighbors);
    for (std::size_t i = begin; i < end; ++i) {
      if (argmax(dists[i - begin]) == pairs[i].label.index()) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double evaluate(const PairPredictor& predictor, std::span<const ImageRGB> frames,
                const SamplerConfig& sampler, std::uint64_t seed) {
  if (frames.empty()) throw ContractError("empty validation set");
  const std::vector<PairSample> pairs = validation_pairs(frames, sampler, seed);
  return pair_accuracy(predictor, pairs);
}

std::vector<MetricsRecord> fit(TrainingState& state, std::span<const ImageRGB> train_frames,
                               std::span<const ImageRGB> validation_frames, const TrainConfig& cfg,
                               const EpochCallback& on_epoch, std::optional<double> stop_at) {
  cfg.validate();
  if (train_frames.empty()) throw ContractError("empty dataset");
  if (validation_frames.empty()) throw ContractError("empty validation set");
  const std::vector<PairSample> val_pairs = validation_pairs(validation_frames, cfg.sampler, cfg.seed);
  SgdOptimizer optimizer(cfg.learning_rate, cfg.momentum);
  const PairPredictor predictor = network_predictor(state.network);
  std::vector<MetricsRecord> history;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    MetricsRecord record;
    record.train_loss = train_epoch(state, train_frames, cfg, optimizer);
    record.epoch = state.epoch;
    record.validation_accuracy = pair_accuracy(predictor, val_pairs);
    history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stop_at && record.validation_accuracy >= *stop_at) break;
  }
  return history;
}

std::string format_metrics_row(const MetricsRecord& record) {
  std::ostringstream out;
  out << record.epoch << ',' << std::setprecision(9) << record.train_loss << ','
      << record.validation_accuracy;
  return out.str();
}

void append_metrics(const std::filesystem::path& path, const MetricsRecord& record) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << kMetricsHeader << '\n';
  out << format_metrics_row(record) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError(path.string() + ": expected header '" + kMetricsHeader + "'");
  }
  std::vector<MetricsRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    MetricsRecord r;
    char c1 = 0, c2 = 0;
    if (!(row >> r.epoch >> c1 >> r.train_loss >> c2 >> r.validation_accuracy) || c1 != ',' ||
        c2 != ',') {
      throw FormatError(path.string() + ": malformed metrics row at line " + std::to_string(line_no));
    }
    records.push_back(r);
  }
  return records;
}

std::string fusion_comparison_csv(std::span<const MetricsRecord> concat,
                                  std::span<const MetricsRecord> kron) {
  std::map<std::size_t, std::pair<std::optional<double>, std::optional<double>>> rows;
  for (const auto& r : concat) rows[r.epoch].first = r.validation_accuracy;
  for (const auto& r : kron) rows[r.epoch].second = r.validation_accuracy;
  std::ostringstream out;
  out << "epoch,concat_val_accuracy,kron_val_accuracy\n" << std::setprecision(9);
  for (const auto& [epoch, accs] : rows) {
    out << epoch << ',';
    if (accs.first) out << *accs.first;
    out << ',';
    if (accs.second) out << *accs.second;
    out << '\n';
  }
  return out.str();
}

}  // namespace fragnet
