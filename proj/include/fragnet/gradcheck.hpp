#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fragnet/fusion.hpp"
#include "fragnet/tensor.hpp"

namespace fragnet {

// Central differences are evaluated in double precision: at step 1e-3 the
// float32 rounding noise of a loss of order 1 is already ~1e-4.
struct GradCheckOptions {
  double step = 1e-3;
  double relative_tolerance = 1e-3;
  double absolute_floor = 1e-5;
};

struct GradCheckReport {
  std::string name;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_error = 0.0;  // |analytic - numeric| / max(floor, rtol-scaled magnitude), 1.0 = limit

  bool passed() const { return checked > 0 && failed == 0; }
};

// |analytic - numeric| <= max(floor, rtol * max(|analytic|, |numeric|)).
bool gradient_matches(double analytic, double numeric, const GradCheckOptions& options);

// Which elements to probe: (index into `wrt`, flat element index).
using ProbeList = std::vector<std::pair<std::size_t, std::size_t>>;

// Runs loss() once with backward, then perturbs each probed element by
// +-step and compares against the accumulated gradient. Every element of
// every tensor in `wrt` is probed when `probes` is empty.
GradCheckReport check_gradients(const std::string& name, const std::function<TensorD()>& loss,
                                std::span<TensorD> wrt, const GradCheckOptions& options = {},
                                const ProbeList& probes = {});

// Every differentiable op on random tensors of at most 64 elements.
std::vector<GradCheckReport> op_gradient_suite(std::uint64_t seed,
                                               const GradCheckOptions& options = {});

// Desk-scale network in train mode on a batch of four random pairs; probes one
// element of every parameter tensor plus extra random elements until at least
// `min_probes` are checked.
GradCheckReport network_gradient_check(FusionKind kind, std::uint64_t seed,
                                       std::size_t min_probes = 20,
                                       const GradCheckOptions& options = {});

}  // namespace fragnet
