#include "hdnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdnet/error.hpp"
#include "hdnet/random.hpp"

namespace hdnet {

namespace {

struct Evaluation {
  double value;
  std::uint64_t branch;
};

Evaluation evaluate(const Objective& objective) {
  ad::Tape tape(false);
  const ad::Value root = objective(tape);
  const double v = root.item();
  if (!std::isfinite(v)) throw NumericError("grad_check", "objective is not finite");
  return {v, tape.branch_signature()};
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(kErrorFloor, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const Objective& objective, ParamStore& store,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw DataError("grad_check", "eps must be > 0");

  store.zero_grad();
  std::uint64_t base_branch = 0;
  {
    ad::Tape tape(true);
    const ad::Value root = objective(tape);
    if (!std::isfinite(root.item())) throw NumericError("grad_check", "objective is not finite");
    tape.backward(root);
    tape.add_param_grads_to(store);
    base_branch = tape.branch_signature();
  }

  struct Coordinate {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Coordinate> all;
  for (std::size_t p = 0; p < store.size(); ++p) {
    if (!store.at(p).trainable) continue;
    for (std::size_t i = 0; i < store.at(p).value.size(); ++i) all.push_back({p, i});
  }
  Rng rng(mix_seed(options.seed, 0x67726164ULL));
  rng.shuffle(std::span<Coordinate>(all));

  GradCheckReport report;
  for (const auto& coord : all) {
    if (report.checked >= options.coordinates) break;
    auto& param = store.at(coord.param);
    const double original = param.value[coord.index];

    param.value[coord.index] = original + options.eps;
    const Evaluation plus = evaluate(objective);
    param.value[coord.index] = original - options.eps;
    const Evaluation minus = evaluate(objective);
    param.value[coord.index] = original;

    if (options.skip_kinks && (plus.branch != base_branch || minus.branch != base_branch)) {
      ++report.skipped_at_kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * options.eps);
    const double analytic = param.grad[coord.index];
    const double err = relative_error(analytic, numeric);
    ++report.checked;
    if (err > report.max_relative_error || report.checked == 1) {
      report.max_relative_error = std::max(report.max_relative_error, err);
      if (err >= report.max_relative_error) {
        report.worst_parameter = param.name;
        report.worst_index = coord.index;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace hdnet
