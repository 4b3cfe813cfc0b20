#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "hdnet/autodiff.hpp"
#include "hdnet/params.hpp"

namespace hdnet {

/// Builds a scalar objective on the given tape. Parameters must be bound via
/// `tape.param(store, i)` on the store handed to grad_check.
using Objective = std::function<ad::Value(ad::Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates to probe; all coordinates are probed when the store has fewer.
  std::size_t coordinates = 200;
  std::uint64_t seed = 0;
  /// Skip coordinates whose +/- eps evaluations land on a different branch
  /// (max-pool argmax or hard-mask flip) than the base point.
  bool skip_kinks = true;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Below this magnitude a gradient is compared absolutely. Central
/// differences with eps = 1e-5 carry round-off near 1e-16 * |f| / eps, about
/// 1e-11 for O(1) losses, so exactly-zero gradients (e.g. attention key
/// biases, which cancel in the softmax) would otherwise read as large errors.
inline constexpr double kErrorFloor = 1e-6;

/// Relative error used throughout: |a - n| / max(kErrorFloor, |a| + |n|).
double relative_error(double analytic, double numeric) noexcept;

/// Compares reverse-mode gradients of `objective` against central
/// differences on a random subsample of trainable coordinates. Parameter
/// values are restored afterwards; store gradients hold the analytic result.
GradCheckReport grad_check(const Objective& objective, ParamStore& store,
                           const GradCheckOptions& options = {});

}  // namespace hdnet
