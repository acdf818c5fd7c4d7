#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsam/common/rng.hpp"
#include "dsam/nn/layers.hpp"

namespace dsam::nn {

/// An ordered stack of layers plus its parameter store, mode flag and seed.
///
/// The descriptor is an opaque, caller-defined text (typically the
/// architecture variant it was built from) that is stored in checkpoints so
/// the same network can be rebuilt before its parameters are loaded.
class Network {
 public:
  Network(Shape input_shape, std::uint64_t seed, std::string descriptor = {});

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(LayerPtr layer) { root_.add(std::move(layer)); }
  Sequential& layers() { return root_; }

  /// Static shape check of the whole stack; returns the per-sample output shape.
  Shape validate() const;

  const Shape& input_shape() const { return input_shape_; }
  const std::string& descriptor() const { return descriptor_; }
  void set_descriptor(std::string d) { descriptor_ = std::move(d); }
  std::uint64_t seed() const { return seed_; }

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }

  /// Batched forward pass; input is [N, ...input_shape].
  Tensor forward(const Tensor& input);
  /// Reverse pass from dLoss/dOutput. Requires a training-mode forward.
  Tensor backward(const Tensor& loss_grad);

  /// All state tensors in declaration order (trainable first within each layer, then buffers).
  std::vector<Parameter*> parameters() { return root_.parameters(); }
  std::vector<Parameter*> trainable_parameters();
  /// Number of trainable scalars.
  std::size_t parameter_count();

  void zero_grad();

  /// Deep copy of every state tensor value (early-stopping snapshots).
  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& state);

  /// Hold dropout masks fixed across forward passes (gradient checking).
  void freeze_dropout(bool frozen);

  /// Reseed the dropout stream.
  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  std::string summary() const { return root_.describe(); }

 private:
  Shape input_shape_;
  std::uint64_t seed_;
  std::string descriptor_;
  Sequential root_{"network"};
  Mode mode_ = Mode::kInference;
  Rng dropout_rng_;
  bool has_train_forward_ = false;
};

}  // namespace dsam::nn
