#include "dsam/nn/optimizer.hpp"

#include <cmath>

#include "dsam/common/error.hpp"

namespace dsam::nn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

const char* optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::vector<Parameter*> params, AdamConstants adam)
    : kind_(kind), lr_(learning_rate), adam_(adam) {
  if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
  for (Parameter* p : params) {
    if (!p->trainable()) continue;
    params_.push_back(p);
    if (kind_ == OptimizerKind::kAdam) {
      m_.push_back(Tensor::zeros_like(p->value));
      v_.push_back(Tensor::zeros_like(p->value));
    }
  }
}

void Optimizer::step() {
  if (kind_ == OptimizerKind::kSgd) {
    for (Parameter* p : params_) {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr_ * p->gradient[i];
      p->zero_grad();
    }
    ++t_;
    return;
  }
  const double step_no = static_cast<double>(t_ + 1);
  const double c1 = 1.0 - std::pow(adam_.beta1, step_no);
  const double c2 = 1.0 - std::pow(adam_.beta2, step_no);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.gradient[i];
      m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * g;
      v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + adam_.eps);
    }
    p.zero_grad();
  }
  ++t_;
}

}  // namespace dsam::nn
