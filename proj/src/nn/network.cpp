#include "dsam/nn/network.hpp"

#include "dsam/common/error.hpp"

namespace dsam::nn {

Network::Network(Shape input_shape, std::uint64_t seed, std::string descriptor)
    : input_shape_(std::move(input_shape)),
      seed_(seed),
      descriptor_(std::move(descriptor)),
      dropout_rng_(derive_seed(seed, Stream::kDropout)) {}

Shape Network::validate() const { return root_.output_shape(input_shape_); }

Tensor Network::forward(const Tensor& input) {
  if (input.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), input.shape().begin() + 1)) {
    throw ConfigError("network: input shape " + shape_string(input.shape()) + " does not match [N]+" +
                      shape_string(input_shape_));
  }
  ForwardContext ctx{mode_, &dropout_rng_};
  Tensor out = root_.forward(input, ctx);
  if (!out.all_finite()) throw DivergenceError("network: forward pass produced a non-finite value");
  has_train_forward_ = mode_ == Mode::kTrain;
  return out;
}

Tensor Network::backward(const Tensor& loss_grad) {
  if (!has_train_forward_) throw StateError("network: backward requires a preceding training-mode forward pass");
  return root_.backward(loss_grad);
}

std::vector<Parameter*> Network::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters()) {
    if (p->trainable()) out.push_back(p);
  }
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : trainable_parameters()) n += p->value.size();
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::vector<Tensor> Network::snapshot() {
  std::vector<Tensor> out;
  for (Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void Network::restore(const std::vector<Tensor>& state) {
  auto params = parameters();
  if (params.size() != state.size()) throw ConfigError("network: snapshot has a different tensor count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->value, state[i], "network restore of " + params[i]->name);
    params[i]->value = state[i];
  }
}

void Network::freeze_dropout(bool frozen) {
  root_.visit([frozen](Layer& l) {
    if (auto* d = dynamic_cast<Dropout*>(&l)) d->freeze_mask(frozen);
  });
}

}  // namespace dsam::nn
