#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsam/common/rng.hpp"
#include "dsam/nn/tensor.hpp"

// Stateless forward/backward kernels. Layers in layers.hpp own parameters and
// caches and delegate the arithmetic here.
namespace dsam::nn {

/// floor((in + 2*padding - kernel) / stride) + 1. Throws ConfigError when the
/// window does not fit or stride is zero.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// ---- convolution: input [N,C,H,W], weights [F,C,k,k], bias [F] ----

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                            std::size_t stride, std::size_t padding);

// ---- max pooling with non-overlapping size x size windows ----

struct MaxPoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  ///< flat input index of each window's winner
};

MaxPoolResult maxpool_forward(const Tensor& input, std::size_t size);
Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, const Shape& input_shape);

// ---- elementwise activations ----

enum class Activation { kRelu, kSigmoid, kSoftmax };

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

double sigmoid(double x);
Tensor sigmoid_forward(const Tensor& x);
/// Takes the sigmoid *output*.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

/// Max-shifted softmax along `axis`.
Tensor softmax_forward(const Tensor& x, std::size_t axis);
/// Takes the softmax *output*.
Tensor softmax_backward(const Tensor& y, const Tensor& grad_out, std::size_t axis);

// ---- dense: input [N,D], weights [D,M], bias [M] ----

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

// ---- batch normalization over every axis except 1 ----

struct BatchNormCache {
  Tensor normalized;            ///< x-hat
  std::vector<double> inv_std;  ///< per channel
};

struct BatchNormTrainResult {
  Tensor output;
  BatchNormCache cache;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  ///< biased (population) variance
};

BatchNormTrainResult batchnorm_forward_train(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                             double eps);
Tensor batchnorm_forward_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                   const std::vector<double>& running_mean, const std::vector<double>& running_var,
                                   double eps);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_out);

// ---- inverted dropout ----

struct DropoutResult {
  Tensor output;
  std::vector<double> mask;  ///< 0 or 1/(1-rate) per element
};

/// Inference mode (training == false) is the identity with an all-ones mask.
DropoutResult dropout_forward(const Tensor& input, double rate, bool training, Rng& rng);
Tensor dropout_backward(const Tensor& grad_out, const std::vector<double>& mask);

// ---- nearest-neighbour 2x upsampling ----

Tensor upsample2_forward(const Tensor& input);
Tensor upsample2_backward(const Tensor& grad_out);

// ---- global average pooling [N,C,H,W] -> [N,C] ----

Tensor global_avg_pool_forward(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape);

}  // namespace dsam::nn
