#include "dsam/nn/layers.hpp"

#include <cmath>
#include <sstream>

#include "dsam/common/error.hpp"

namespace dsam::nn {

namespace {

[[noreturn]] void no_forward(const std::string& kind) {
  throw StateError(kind + ": backward called without a cached forward pass");
}

void require_rank(const Shape& shape, std::size_t rank, const std::string& what) {
  if (shape.size() != rank) {
    throw ConfigError(what + ": expected per-sample rank " + std::to_string(rank) + ", got " + shape_string(shape));
  }
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

const char* role_name(ParamRole role) {
  switch (role) {
    case ParamRole::kKernel: return "kernel";
    case ParamRole::kBias: return "bias";
    case ParamRole::kBnScale: return "bn_scale";
    case ParamRole::kBnShift: return "bn_shift";
    case ParamRole::kDense: return "dense";
    case ParamRole::kAttention: return "attention";
    case ParamRole::kBuffer: return "buffer";
  }
  return "unknown";
}

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
}

// ---- Conv2d ----

Conv2d::Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kernel, std::size_t stride,
               std::size_t padding, Rng& init_rng, std::string name)
    : in_channels_(in_channels),
      filters_(filters),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weights_(name + ".weight", ParamRole::kKernel, Tensor({filters, in_channels, kernel, kernel})),
      bias_(name + ".bias", ParamRole::kBias, Tensor({filters})) {
  if (stride == 0) throw ConfigError(name + ": stride must be >= 1");
  he_uniform(weights_.value, in_channels * kernel * kernel, init_rng);
}

std::unique_ptr<Conv2d> Conv2d::same(std::size_t in_channels, std::size_t filters, std::size_t kernel, Rng& init_rng,
                                     std::string name) {
  if (kernel % 2 == 0) throw ConfigError(name + ": same padding needs an odd kernel, got " + std::to_string(kernel));
  return std::make_unique<Conv2d>(in_channels, filters, kernel, 1, (kernel - 1) / 2, init_rng, std::move(name));
}

std::string Conv2d::describe() const {
  return "conv2d in=" + std::to_string(in_channels_) + " filters=" + std::to_string(filters_) +
         " kernel=" + std::to_string(kernel_) + " stride=" + std::to_string(stride_) +
         " padding=" + std::to_string(padding_);
}

Shape Conv2d::output_shape(const Shape& input) const {
  require_rank(input, 3, weights_.name);
  if (input[0] != in_channels_) {
    throw ConfigError(weights_.name + ": expects " + std::to_string(in_channels_) + " channels, input shape " +
                      shape_string(input));
  }
  return {filters_, conv_output_size(input[1], kernel_, stride_, padding_),
          conv_output_size(input[2], kernel_, stride_, padding_)};
}

Tensor Conv2d::forward(const Tensor& input, const ForwardContext&) {
  input_ = input;
  return conv2d_forward(input, weights_.value, bias_.value, stride_, padding_);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  if (!input_) no_forward(weights_.name);
  Conv2dGrads g = conv2d_backward(*input_, weights_.value, grad_out, stride_, padding_);
  weights_.gradient += g.weights;
  bias_.gradient += g.bias;
  return std::move(g.input);
}

// ---- MaxPool ----

Shape MaxPool::output_shape(const Shape& input) const {
  require_rank(input, 3, "maxpool");
  if (size_ == 0 || input[1] % size_ != 0 || input[2] % size_ != 0) {
    throw ConfigError("maxpool size=" + std::to_string(size_) + ": spatial dims of " + shape_string(input) +
                      " are not divisible");
  }
  return {input[0], input[1] / size_, input[2] / size_};
}

Tensor MaxPool::forward(const Tensor& input, const ForwardContext&) {
  MaxPoolResult r = maxpool_forward(input, size_);
  input_shape_ = input.shape();
  argmax_ = std::move(r.argmax);
  has_cache_ = true;
  return std::move(r.output);
}

Tensor MaxPool::backward(const Tensor& grad_out) {
  if (!has_cache_) no_forward("maxpool");
  return maxpool_backward(grad_out, argmax_, input_shape_);
}

// ---- Activation ----

std::string ActivationLayer::kind() const {
  switch (kind_) {
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "activation";
}

std::string ActivationLayer::describe() const {
  if (kind_ == Activation::kSoftmax) return "softmax axis=" + std::to_string(axis_);
  return kind();
}

Shape ActivationLayer::output_shape(const Shape& input) const {
  if (kind_ == Activation::kSoftmax && axis_ >= input.size()) {
    throw ConfigError("softmax axis " + std::to_string(axis_) + " invalid for shape " + shape_string(input));
  }
  return input;
}

Tensor ActivationLayer::forward(const Tensor& input, const ForwardContext&) {
  switch (kind_) {
    case Activation::kRelu:
      cache_ = input;
      return relu_forward(input);
    case Activation::kSigmoid:
      cache_ = sigmoid_forward(input);
      return *cache_;
    case Activation::kSoftmax:
      cache_ = softmax_forward(input, axis_ + 1);
      return *cache_;
  }
  throw ConfigError("unknown activation");
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
  if (!cache_) no_forward(kind());
  switch (kind_) {
    case Activation::kRelu: return relu_backward(*cache_, grad_out);
    case Activation::kSigmoid: return sigmoid_backward(*cache_, grad_out);
    case Activation::kSoftmax: return softmax_backward(*cache_, grad_out, axis_ + 1);
  }
  throw ConfigError("unknown activation");
}

// ---- Dense ----

Dense::Dense(std::size_t inputs, std::size_t outputs, Rng& init_rng, std::string name)
    : inputs_(inputs),
      outputs_(outputs),
      weights_(name + ".weight", ParamRole::kDense, Tensor({inputs, outputs})),
      bias_(name + ".bias", ParamRole::kBias, Tensor({outputs})) {
  he_uniform(weights_.value, inputs, init_rng);
}

std::string Dense::describe() const {
  return "dense in=" + std::to_string(inputs_) + " out=" + std::to_string(outputs_);
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != inputs_) {
    throw ConfigError(weights_.name + ": expects [" + std::to_string(inputs_) + "], input shape " +
                      shape_string(input));
  }
  return {outputs_};
}

Tensor Dense::forward(const Tensor& input, const ForwardContext&) {
  input_ = input;
  return dense_forward(input, weights_.value, bias_.value);
}

Tensor Dense::backward(const Tensor& grad_out) {
  if (!input_) no_forward(weights_.name);
  DenseGrads g = dense_backward(*input_, weights_.value, grad_out);
  weights_.gradient += g.weights;
  bias_.gradient += g.bias;
  return std::move(g.input);
}

// ---- BatchNorm ----

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum, std::string name)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(name + ".gamma", ParamRole::kBnScale, Tensor({channels}, 1.0)),
      beta_(name + ".beta", ParamRole::kBnShift, Tensor({channels}, 0.0)),
      running_mean_(name + ".running_mean", ParamRole::kBuffer, Tensor({channels}, 0.0)),
      running_var_(name + ".running_var", ParamRole::kBuffer, Tensor({channels}, 1.0)) {
  if (!(eps > 0.0)) throw ConfigError(name + ": eps must be positive");
}

std::string BatchNorm::describe() const {
  return "batchnorm channels=" + std::to_string(channels_) + " eps=" + fmt_double(eps_) +
         " momentum=" + fmt_double(momentum_);
}

Shape BatchNorm::output_shape(const Shape& input) const {
  if (input.empty() || input[0] != channels_) {
    throw ConfigError(gamma_.name + ": expects " + std::to_string(channels_) + " channels, input shape " +
                      shape_string(input));
  }
  return input;
}

Tensor BatchNorm::forward(const Tensor& input, const ForwardContext& ctx) {
  if (!ctx.training()) {
    return batchnorm_forward_inference(input, gamma_.value, beta_.value, running_mean_.value.values(),
                                       running_var_.value.values(), eps_);
  }
  BatchNormTrainResult r = batchnorm_forward_train(input, gamma_.value, beta_.value, eps_);
  for (std::size_t c = 0; c < channels_; ++c) {
    running_mean_.value[c] = momentum_ * running_mean_.value[c] + (1.0 - momentum_) * r.batch_mean[c];
    running_var_.value[c] = momentum_ * running_var_.value[c] + (1.0 - momentum_) * r.batch_var[c];
  }
  cache_ = std::move(r.cache);
  return std::move(r.output);
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  if (!cache_) no_forward(gamma_.name + " (training-mode forward required)");
  BatchNormGrads g = batchnorm_backward(*cache_, gamma_.value, grad_out);
  gamma_.gradient += g.gamma;
  beta_.gradient += g.beta;
  return std::move(g.input);
}

// ---- Dropout ----

Dropout::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0, 1), got " + fmt_double(rate));
}

std::string Dropout::describe() const { return "dropout rate=" + fmt_double(rate_); }

Tensor Dropout::forward(const Tensor& input, const ForwardContext& ctx) {
  if (ctx.training() && frozen_ && mask_.size() == input.size()) {
    has_cache_ = true;
    return dropout_backward(input, mask_);  // same elementwise product
  }
  if (ctx.training() && rate_ > 0.0 && ctx.rng == nullptr) {
    throw StateError("dropout: training-mode forward needs a random generator");
  }
  Rng dummy(0);
  DropoutResult r = dropout_forward(input, rate_, ctx.training(), ctx.rng ? *ctx.rng : dummy);
  mask_ = std::move(r.mask);
  has_cache_ = true;
  return std::move(r.output);
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (!has_cache_) no_forward("dropout");
  return dropout_backward(grad_out, mask_);
}

// ---- Upsample2 ----

Shape Upsample2::output_shape(const Shape& input) const {
  require_rank(input, 3, "upsample2");
  return {input[0], 2 * input[1], 2 * input[2]};
}

Tensor Upsample2::forward(const Tensor& input, const ForwardContext&) {
  has_cache_ = true;
  return upsample2_forward(input);
}

Tensor Upsample2::backward(const Tensor& grad_out) {
  if (!has_cache_) no_forward("upsample2");
  return upsample2_backward(grad_out);
}

// ---- GlobalAvgPool ----

Shape GlobalAvgPool::output_shape(const Shape& input) const {
  require_rank(input, 3, "global_avg_pool");
  return {input[0]};
}

Tensor GlobalAvgPool::forward(const Tensor& input, const ForwardContext&) {
  input_shape_ = input.shape();
  return global_avg_pool_forward(input);
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) no_forward("global_avg_pool");
  return global_avg_pool_backward(grad_out, input_shape_);
}

// ---- Flatten ----

Tensor Flatten::forward(const Tensor& input, const ForwardContext&) {
  input_shape_ = input.shape();
  return input.reshaped({input.dim(0), input.size() / input.dim(0)});
}

Tensor Flatten::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) no_forward("flatten");
  return grad_out.reshaped(input_shape_);
}

// ---- Sequential ----

std::string Sequential::describe() const {
  std::ostringstream os;
  os << label_ << " {";
  for (const auto& l : layers_) os << ' ' << l->describe() << ';';
  os << " }";
  return os.str();
}

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::forward(const Tensor& input, const ForwardContext& ctx) {
  Tensor x = input;
  for (auto& l : layers_) x = l->forward(x, ctx);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void Sequential::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

void Sequential::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  for (auto& l : layers_) l->visit(fn);
}

// ---- Residual ----

std::string Residual::describe() const { return "residual " + body_->describe(); }

Shape Residual::output_shape(const Shape& input) const {
  const Shape out = body_->output_shape(input);
  if (out != input) {
    throw ConfigError("residual: body maps " + shape_string(input) + " to " + shape_string(out) +
                      "; skip connection needs equal shapes");
  }
  return out;
}

Tensor Residual::forward(const Tensor& input, const ForwardContext& ctx) {
  Tensor sum = body_->forward(input, ctx);
  sum += input;
  sum_ = sum;
  return relu_forward(sum);
}

Tensor Residual::backward(const Tensor& grad_out) {
  if (!sum_) no_forward("residual");
  Tensor g = relu_backward(*sum_, grad_out);
  Tensor dx = body_->backward(g);
  dx += g;
  return dx;
}

void Residual::clear_cache() {
  sum_.reset();
  body_->clear_cache();
}

void Residual::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  body_->visit(fn);
}

// ---- SharedPerChannel ----

std::string SharedPerChannel::describe() const { return "shared_per_channel " + extractor_->describe(); }

Shape SharedPerChannel::output_shape(const Shape& input) const {
  require_rank(input, 3, "shared_per_channel");
  const Shape feat = extractor_->output_shape({1, input[1], input[2]});
  if (feat.size() != 1) {
    throw ConfigError("shared_per_channel: extractor must produce a vector, got " + shape_string(feat));
  }
  return {input[0] * feat[0]};
}

Tensor SharedPerChannel::forward(const Tensor& input, const ForwardContext& ctx) {
  if (input.rank() != 4) throw ConfigError("shared_per_channel: expects [N,S,H,W], got " + shape_string(input.shape()));
  input_shape_ = input.shape();
  const std::size_t n = input.dim(0), s = input.dim(1);
  Tensor feats = extractor_->forward(input.reshaped({n * s, 1, input.dim(2), input.dim(3)}), ctx);
  return feats.reshaped({n, s * feats.dim(1)});
}

Tensor SharedPerChannel::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) no_forward("shared_per_channel");
  const std::size_t n = input_shape_[0], s = input_shape_[1];
  Tensor g = extractor_->backward(grad_out.reshaped({n * s, grad_out.dim(1) / s}));
  return g.reshaped(input_shape_);
}

void SharedPerChannel::clear_cache() {
  input_shape_.clear();
  extractor_->clear_cache();
}

void SharedPerChannel::visit(const std::function<void(Layer&)>& fn) {
  fn(*this);
  extractor_->visit(fn);
}

}  // namespace dsam::nn
