#pragma once

#include <cstddef>
#include <cstdint>

#include "hdnet/grad_check.hpp"
#include "hdnet/model.hpp"

namespace hdnet {

struct ModelCheckOptions {
  std::size_t samples = 2;
  std::size_t frames = 8;
  std::size_t points = 16;
  std::uint64_t seed = 0;
  GradCheckOptions grad;
};

/// Finite-difference check of the full training loss (both backbones, the
/// frame sampler with frozen Gumbel noise, the temporal aggregator and the
/// classifier) on a small synthetic batch with fresh random weights.
///
/// The sampler runs with the relaxed (soft) mask: the straight-through hard
/// mask has a forward value that is piecewise constant in the scorer
/// weights, so central differences cannot see its surrogate gradient.
GradCheckReport check_model_gradients(ModelConfig config, const ModelCheckOptions& options = {});

}  // namespace hdnet
