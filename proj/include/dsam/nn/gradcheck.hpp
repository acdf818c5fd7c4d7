#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsam/nn/network.hpp"

namespace dsam::nn {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  /// Entries checked per tensor; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t sample_seed = 0;
  /// Hold dropout masks fixed between the analytic pass and the perturbed evaluations.
  bool freeze_dropout = true;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  bool valid = true;     ///< false when the loss is non-finite or not reproducible
  std::string fault;
  double max_rel_error = 0.0;
  std::vector<TensorCheck> tensors;

  bool passed(double tolerance) const { return valid && max_rel_error <= tolerance; }
};

/// A tensor being perturbed and the analytic gradient it is checked against.
struct GradTarget {
  std::string name;
  Tensor* value;
  const Tensor* analytic;
};

/// Central-difference check of `loss` around the current values of `targets`.
GradCheckReport check_gradients(const std::function<double()>& loss, const std::vector<GradTarget>& targets,
                                const GradCheckOptions& opts);

/// BCE-loss gradient check of every trainable parameter of `net` (training mode).
GradCheckReport grad_check(Network& net, const Tensor& input, const Tensor& label, const GradCheckOptions& opts);

}  // namespace dsam::nn
