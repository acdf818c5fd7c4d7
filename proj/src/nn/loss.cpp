#include "dsam/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dsam/common/error.hpp"

namespace dsam::nn {

LossValue bce_loss(const Tensor& pred, const Tensor& label) {
  if (pred.shape() != label.shape()) {
    throw ContractError("bce: prediction shape " + shape_string(pred.shape()) + " vs label shape " +
                        shape_string(label.shape()));
  }
  LossValue out{0.0, Tensor(pred.shape())};
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractError("bce: prediction " + std::to_string(p) + " at index " + std::to_string(i) +
                          " is outside [0, 1]");
    }
    const double y = label[i];
    const double pc = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    out.loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    // Derivative of the clamped expression; zero where the clamp is active.
    const bool clamped = p < kBceClamp || p > 1.0 - kBceClamp;
    out.gradient[i] = clamped ? 0.0 : inv_n * ((1.0 - y) / (1.0 - pc) - y / pc);
  }
  out.loss *= inv_n;
  return out;
}

}  // namespace dsam::nn
