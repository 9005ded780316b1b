#include "fragnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fragnet/network.hpp"
#include "fragnet/ops.hpp"

namespace fragnet {

bool gradient_matches(double analytic, double numeric, const GradCheckOptions& options) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return std::abs(analytic - numeric) <= std::max(options.absolute_floor, options.relative_tolerance * scale);
}

GradCheckReport check_gradients(const std::string& name, const std::function<TensorD()>& loss,
                                std::span<TensorD> wrt, const GradCheckOptions& options,
                                const ProbeList& probes) {
  for (TensorD& t : wrt) t.zero_grad();
  loss().backward();

  ProbeList all = probes;
  if (all.empty()) {
    for (std::size_t i = 0; i < wrt.size(); ++i)
      for (std::size_t k = 0; k < wrt[i].numel(); ++k) all.emplace_back(i, k);
  }
  std::vector<std::vector<double>> analytic(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    std::span<const double> g = wrt[i].grad();
    analytic[i] = g.empty() ? std::vector<double>(wrt[i].numel(), 0.0)
                            : std::vector<double>(g.begin(), g.end());
  }

  GradCheckReport report{name};
  NoGradGuard no_grad;
  for (const auto& [ti, k] : all) {
    std::span<double> values = wrt[ti].mutable_values();
    const double saved = values[k];
    values[k] = saved + options.step;
    const double plus = loss().item();
    values[k] = saved - options.step;
    const double minus = loss().item();
    values[k] = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic[ti][k];
    const double limit = std::max(options.absolute_floor,
                                  options.relative_tolerance * std::max(std::abs(a), std::abs(numeric)));
    report.worst_error = std::max(report.worst_error, std::abs(a - numeric) / limit);
    ++report.checked;
    if (!gradient_matches(a, numeric, options)) ++report.failed;
  }
  return report;
}

namespace {

TensorD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                      bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return TensorD(std::move(shape), std::move(v), requires_grad);
}

// Values spaced 0.05 apart in random order, so no pooling window has a
// near-tie and nothing sits near a ReLU kink.
TensorD spaced_tensor(Shape shape, std::mt19937_64& rng) {
  std::vector<double> v(shape_numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  const double centre = static_cast<double>(v.size()) / 2.0 - 0.5;
  for (double& x : v) x = (x - centre) * 0.05;
  return TensorD(std::move(shape), std::move(v), true);
}

// sum(r * y) with a fixed random r, so every output element matters.
TensorD projected(const TensorD& y, const TensorD& r) {
  return sum(mul(y, r));
}

}  // namespace

std::vector<GradCheckReport> op_gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckReport> reports;
  const auto run = [&](const std::string& name, std::vector<TensorD> wrt,
                       const std::function<TensorD(std::vector<TensorD>&)>& op) {
    TensorD probe = op(wrt);
    const TensorD r = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
    const auto loss = [&wrt, &op, &r]() { return projected(op(wrt), r); };
    reports.push_back(check_gradients(name, loss, wrt, options));
  };

  run("conv3x3", {random_tensor({1, 4, 4, 2}, rng), random_tensor({3, 3, 2, 3}, rng), random_tensor({3}, rng)},
      [](auto& t) { return conv3x3(t[0], t[1], t[2]); });
  run("maxpool2", {spaced_tensor({1, 4, 4, 3}, rng)}, [](auto& t) { return maxpool2(t[0]); });
  run("upsample2", {random_tensor({1, 2, 2, 3}, rng)}, [](auto& t) { return upsample2(t[0]); });

  auto bn_flat = std::make_shared<BatchNormState<double>>(BatchNormState<double>::create(4));
  run("batchnorm.train", {random_tensor({6, 4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)},
      [bn_flat](auto& t) { return batchnorm(t[0], t[1], t[2], *bn_flat, Mode::Train); });
  auto bn_spatial = std::make_shared<BatchNormState<double>>(BatchNormState<double>::create(3));
  run("batchnorm.train.spatial",
      {random_tensor({2, 2, 3, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)},
      [bn_spatial](auto& t) { return batchnorm(t[0], t[1], t[2], *bn_spatial, Mode::Train); });
  auto bn_infer = std::make_shared<BatchNormState<double>>(BatchNormState<double>::create(4));
  bn_infer->running_mean = random_tensor({4}, rng, -0.5, 0.5, false);
  bn_infer->running_var = random_tensor({4}, rng, 0.5, 2.0, false);
  run("batchnorm.infer", {random_tensor({3, 4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)},
      [bn_infer](auto& t) { return batchnorm(t[0], t[1], t[2], *bn_infer, Mode::Infer); });

  run("dense", {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)},
      [](auto& t) { return dense(t[0], t[1], t[2]); });
  run("relu", {spaced_tensor({4, 8}, rng)}, [](auto& t) { return relu(t[0]); });
  run("softmax", {random_tensor({3, 8}, rng, -2.0, 2.0)}, [](auto& t) { return softmax(t[0]); });

  std::uniform_int_distribution<std::size_t> label(0, 7);
  const std::vector<std::size_t> labels{label(rng), label(rng), label(rng), label(rng)};
  run("cross_entropy.fused", {random_tensor({4, 8}, rng, -2.0, 2.0)},
      [labels](auto& t) { return cross_entropy(softmax(t[0]), std::span<const std::size_t>(labels)); });
  run("cross_entropy.probs", {random_tensor({4, 8}, rng, 0.2, 1.0)},
      [labels](auto& t) { return cross_entropy(t[0], std::span<const std::size_t>(labels)); });

  run("concat_features", {random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)},
      [](auto& t) { return concat_features(t[0], t[1]); });
  run("kronecker_features", {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)},
      [](auto& t) { return kronecker_features(t[0], t[1]); });
  run("flatten", {random_tensor({2, 2, 2, 3}, rng)}, [](auto& t) { return flatten(t[0]); });
  run("stack", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [](auto& t) { return stack<double>(std::span<const TensorD>(t.data(), 2)); });
  run("concat_batch", {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
      [](auto& t) { return concat_batch(t[0], t[1]); });
  run("slice_batch", {random_tensor({4, 3}, rng)}, [](auto& t) { return slice_batch(t[0], 1, 3); });
  run("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto& t) { return mul(t[0], t[1]); });
  run("square", {random_tensor({10}, rng)}, [](auto& t) { return square(t[0]); });
  run("scale", {random_tensor({10}, rng)}, [](auto& t) { return scale(t[0], 1.7); });
  return reports;
}

GradCheckReport network_gradient_check(FusionKind kind, std::uint64_t seed, std::size_t min_probes,
                                       const GradCheckOptions& options) {
  PairNetwork<float> reference(ModelConfig::desk(kind), seed);
  PairNetwork<double> net = reference.cast<double>();
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  const std::size_t side = net.config().fen.input_side;
  const std::size_t batch = 4;
  const TensorD central = random_tensor({batch, side, side, 3}, rng, -1.0, 1.0, false);
  const TensorD neighbor = random_tensor({batch, side, side, 3}, rng, -1.0, 1.0, false);
  std::uniform_int_distribution<std::size_t> label(0, kNumClasses - 1);
  std::vector<std::size_t> labels(batch);
  for (auto& l : labels) l = label(rng);

  std::vector<TensorD> wrt;
  for (auto& p : net.parameters()) wrt.push_back(p.tensor);
  ProbeList probes;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    std::uniform_int_distribution<std::size_t> element(0, wrt[i].numel() - 1);
    probes.emplace_back(i, element(rng));
  }
  std::uniform_int_distribution<std::size_t> which(0, wrt.size() - 1);
  while (probes.size() < min_probes) {
    const std::size_t i = which(rng);
    std::uniform_int_distribution<std::size_t> element(0, wrt[i].numel() - 1);
    probes.emplace_back(i, element(rng));
  }
  const auto loss = [&]() {
    return cross_entropy(softmax(net.logits(central, neighbor, Mode::Train)),
                         std::span<const std::size_t>(labels));
  };
  return check_gradients(std::string("network.") + fusion_name(kind), loss, wrt, options, probes);
}

}  // namespace fragnet
