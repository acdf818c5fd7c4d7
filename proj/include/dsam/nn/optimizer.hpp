#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsam/nn/layers.hpp"

namespace dsam::nn {

enum class OptimizerKind { kAdam, kSgd };

OptimizerKind parse_optimizer(const std::string& name);
const char* optimizer_name(OptimizerKind kind);

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer over a fixed list of parameters. step() applies the
/// update from the accumulated gradients and then clears them.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::vector<Parameter*> params, AdamConstants adam = {});

  void step();

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamConstants adam_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace dsam::nn
