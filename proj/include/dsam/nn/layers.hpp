#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsam/common/rng.hpp"
#include "dsam/nn/kernels.hpp"
#include "dsam/nn/tensor.hpp"

namespace dsam::nn {

enum class ParamRole : std::uint8_t {
  kKernel = 0,
  kBias = 1,
  kBnScale = 2,
  kBnShift = 3,
  kDense = 4,
  kAttention = 5,
  kBuffer = 6,  ///< non-trainable state (batchnorm running statistics)
};

const char* role_name(ParamRole role);

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, ParamRole role, Tensor value)
      : name(std::move(name)), role(role), value(std::move(value)), gradient(Tensor::zeros_like(this->value)) {}

  std::string name;
  ParamRole role = ParamRole::kKernel;
  Tensor value;
  Tensor gradient;

  bool trainable() const { return role != ParamRole::kBuffer; }
  void zero_grad() { gradient.fill(0.0); }
};

enum class Mode { kTrain, kInference };

/// Runtime context threaded through forward passes.
struct ForwardContext {
  Mode mode = Mode::kInference;
  Rng* rng = nullptr;  ///< required by dropout in training mode
  bool training() const { return mode == Mode::kTrain; }
};

/// A network node. forward() caches whatever backward() needs; backward()
/// accumulates parameter gradients and returns the gradient w.r.t. the input.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  /// One-line description with hyperparameters, used in architecture dumps.
  virtual std::string describe() const = 0;
  /// Static shape inference on a per-sample shape (no batch axis). Throws ConfigError.
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor forward(const Tensor& input, const ForwardContext& ctx) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  /// Trainable parameters followed by buffers, in declaration order.
  virtual std::vector<Parameter*> parameters() { return {}; }

  /// Drop forward caches.
  virtual void clear_cache() {}

  /// Pre-order traversal over this layer and any nested layers.
  virtual void visit(const std::function<void(Layer&)>& fn) { fn(*this); }
};

using LayerPtr = std::unique_ptr<Layer>;

/// He-uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kernel, std::size_t stride, std::size_t padding,
         Rng& init_rng, std::string name = "conv");
  /// "Same" padding (kernel - 1) / 2, stride 1. Kernel must be odd.
  static std::unique_ptr<Conv2d> same(std::size_t in_channels, std::size_t filters, std::size_t kernel,
                                      Rng& init_rng, std::string name = "conv");

  std::string kind() const override { return "conv2d"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weights_, &bias_}; }
  void clear_cache() override { input_.reset(); }

  Parameter& weights() { return weights_; }
  Parameter& bias() { return bias_; }
  std::size_t filters() const { return filters_; }

 private:
  std::size_t in_channels_, filters_, kernel_, stride_, padding_;
  Parameter weights_, bias_;
  std::optional<Tensor> input_;
};

class MaxPool final : public Layer {
 public:
  explicit MaxPool(std::size_t size) : size_(size) {}
  std::string kind() const override { return "maxpool"; }
  std::string describe() const override { return "maxpool size=" + std::to_string(size_); }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { argmax_.clear(); has_cache_ = false; }

 private:
  std::size_t size_;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
  bool has_cache_ = false;
};

class ActivationLayer final : public Layer {
 public:
  /// `axis` is the per-sample axis for softmax (0 = first non-batch axis).
  explicit ActivationLayer(Activation kind, std::size_t axis = 0) : kind_(kind), axis_(axis) {}
  std::string kind() const override;
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { cache_.reset(); }

 private:
  Activation kind_;
  std::size_t axis_;
  std::optional<Tensor> cache_;  ///< input for relu, output otherwise
};

class Dense final : public Layer {
 public:
  Dense(std::size_t inputs, std::size_t outputs, Rng& init_rng, std::string name = "dense");
  std::string kind() const override { return "dense"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weights_, &bias_}; }
  void clear_cache() override { input_.reset(); }

  Parameter& weights() { return weights_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t inputs_, outputs_;
  Parameter weights_, bias_;
  std::optional<Tensor> input_;
};

class BatchNorm final : public Layer {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.9;

  explicit BatchNorm(std::size_t channels, double eps = kDefaultEps, double momentum = kDefaultMomentum,
                     std::string name = "bn");
  std::string kind() const override { return "batchnorm"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }
  void clear_cache() override { cache_.reset(); }

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const Tensor& running_mean() const { return running_mean_.value; }
  const Tensor& running_var() const { return running_var_.value; }

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  std::optional<BatchNormCache> cache_;
};

class Dropout final : public Layer {
 public:
  explicit Dropout(double rate);
  std::string kind() const override { return "dropout"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { has_cache_ = false; }

  /// Reuse the last training mask instead of drawing a new one.
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double rate() const { return rate_; }

 private:
  double rate_;
  bool frozen_ = false;
  bool has_cache_ = false;
  std::vector<double> mask_;
};

class Upsample2 final : public Layer {
 public:
  std::string kind() const override { return "upsample2"; }
  std::string describe() const override { return "upsample2"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { has_cache_ = false; }

 private:
  bool has_cache_ = false;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  std::string describe() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { input_shape_.clear(); }

 private:
  Shape input_shape_;
};

class Flatten final : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  std::string describe() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override { return {shape_size(input)}; }
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { input_shape_.clear(); }

 private:
  Shape input_shape_;
};

/// Ordered container of layers; itself a layer so blocks can nest.
class Sequential : public Layer {
 public:
  Sequential() = default;
  explicit Sequential(std::string label) : label_(std::move(label)) {}

  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

  std::string kind() const override { return "sequential"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void clear_cache() override;
  void visit(const std::function<void(Layer&)>& fn) override;

 private:
  std::string label_ = "sequential";
  std::vector<LayerPtr> layers_;
};

/// out = relu(body(x) + x). Body must preserve the shape.
class Residual final : public Layer {
 public:
  explicit Residual(std::unique_ptr<Sequential> body) : body_(std::move(body)) {}
  std::string kind() const override { return "residual"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return body_->parameters(); }
  void clear_cache() override;
  void visit(const std::function<void(Layer&)>& fn) override;
  Sequential& body() { return *body_; }

 private:
  std::unique_ptr<Sequential> body_;
  std::optional<Tensor> sum_;
};

/// Applies a shared sub-network to each channel of [N, S, H, W] independently
/// (as [N*S, 1, H, W]) and concatenates the per-channel feature vectors into [N, S*F].
class SharedPerChannel final : public Layer {
 public:
  explicit SharedPerChannel(std::unique_ptr<Sequential> extractor) : extractor_(std::move(extractor)) {}
  std::string kind() const override { return "shared_per_channel"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return extractor_->parameters(); }
  void clear_cache() override;
  void visit(const std::function<void(Layer&)>& fn) override;
  Sequential& extractor() { return *extractor_; }

 private:
  std::unique_ptr<Sequential> extractor_;
  Shape input_shape_;
};

}  // namespace dsam::nn
