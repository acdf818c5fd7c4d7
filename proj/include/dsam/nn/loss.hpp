#pragma once

#include "dsam/nn/tensor.hpp"

namespace dsam::nn {

struct LossValue {
  double loss = 0.0;
  Tensor gradient;  ///< dLoss/dPrediction, same shape as the prediction
};

/// Probability clamp used by binary cross-entropy.
inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over all elements. Predictions must lie in [0, 1]
/// and are clamped to [kBceClamp, 1 - kBceClamp] before the log.
LossValue bce_loss(const Tensor& pred, const Tensor& label);

}  // namespace dsam::nn
