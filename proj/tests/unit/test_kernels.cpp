#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/nn/kernels.hpp"
#include "dsam/nn/loss.hpp"
#include "dsam/nn/optimizer.hpp"

using namespace dsam;
using namespace dsam::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Direct sliding-window cross-correlation, written independently of the im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), f = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, f, oh, ow});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s) {
          double acc = b[o];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t bb = 0; bb < k; ++bb) {
                const long yy = static_cast<long>(r * stride + a) - static_cast<long>(pad);
                const long xx = static_cast<long>(s * stride + bb) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += x.at(i, ch, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) * w.at(o, ch, a, bb);
              }
          y.at(i, o, r, s) = acc;
        }
  return y;
}

}  // namespace

TEST(Conv2d, HandExample) {
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 2, 2}, {1, 0, 0, 1});
  Tensor b({1}, {0.0});
  Tensor y = conv2d_forward(x, w, b, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{6, 8, 12, 14}));
}

TEST(Conv2d, ZeroInputGivesBias) {
  Rng rng(3);
  Tensor x({2, 3, 5, 5});
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor b({4}, {0.5, -1.0, 2.0, 3.25});
  Tensor y = conv2d_forward(x, w, b, 1, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 4; ++f)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(y.at(n, f, i, j), b[f]);
}

TEST(Conv2d, SamePaddingKeeps256) {
  EXPECT_EQ(conv_output_size(256, 3, 1, 1), 256u);
}

TEST(Conv2d, ChannelMismatchIsConfigError) {
  Tensor x({1, 2, 4, 4});
  Tensor w({1, 3, 3, 3});
  Tensor b({1});
  EXPECT_THROW(conv2d_forward(x, w, b, 1, 1), ConfigError);
  EXPECT_THROW(conv_output_size(2, 5, 1, 1), ConfigError);
  EXPECT_THROW(conv_output_size(8, 3, 0, 1), ConfigError);
}

TEST(Conv2d, MatchesNaiveOracleAndShapeLaw) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = 1 + rng.below(4), stride = 1 + rng.below(3), pad = rng.below(3);
    const std::size_t h = k + rng.below(7), w = k + rng.below(7);
    const std::size_t c = 1 + rng.below(3), f = 1 + rng.below(4), n = 1 + rng.below(2);
    Tensor x = random_tensor({n, c, h, w}, rng);
    Tensor wt = random_tensor({f, c, k, k}, rng);
    Tensor b = random_tensor({f}, rng);
    Tensor y = conv2d_forward(x, wt, b, stride, pad);
    EXPECT_EQ(y.dim(2), (h + 2 * pad - k) / stride + 1);
    EXPECT_EQ(y.dim(3), (w + 2 * pad - k) / stride + 1);
    Tensor ref = naive_conv(x, wt, b, stride, pad);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, Linearity) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({2, 2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b({3});
    const double a = rng.uniform(-5.0, 5.0);
    Tensor ax = x;
    ax *= a;
    Tensor y1 = conv2d_forward(ax, w, b, 1, 1);
    Tensor y2 = conv2d_forward(x, w, b, 1, 1);
    for (std::size_t i = 0; i < y1.size(); ++i) {
      const double expect = a * y2[i];
      EXPECT_LE(std::abs(y1[i] - expect), 1e-9 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(MaxPool, HandExampleAndConstant) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto r = maxpool_forward(x, 2);
  EXPECT_EQ(r.output.values(), std::vector<double>{4});
  Tensor c({1, 2, 4, 4}, 7.5);
  auto rc = maxpool_forward(c, 2);
  EXPECT_EQ(rc.output.shape(), (Shape{1, 2, 2, 2}));
  for (double v : rc.output.values()) EXPECT_EQ(v, 7.5);
  EXPECT_EQ(maxpool_forward(Tensor({1, 1, 256, 256}), 2).output.shape(), (Shape{1, 1, 128, 128}));
}

TEST(MaxPool, NonDivisibleIsConfigError) {
  EXPECT_THROW(maxpool_forward(Tensor({1, 1, 5, 4}), 2), ConfigError);
}

TEST(MaxPool, MatchesBruteForceOnIntegers) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + rng.below(3), h = s * (1 + rng.below(4)), w = s * (1 + rng.below(4));
    Tensor x({2, 2, h, w});
    for (double& v : x.data()) v = static_cast<double>(static_cast<int>(rng.below(21)) - 10);
    auto r = maxpool_forward(x, s);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < h / s; ++i)
          for (std::size_t j = 0; j < w / s; ++j) {
            double m = -1e300;
            for (std::size_t a = 0; a < s; ++a)
              for (std::size_t b = 0; b < s; ++b) m = std::max(m, x.at(n, c, i * s + a, j * s + b));
            EXPECT_EQ(r.output.at(n, c, i, j), m);
          }
  }
}

TEST(Activation, ReluSigmoidSoftmaxExamples) {
  EXPECT_EQ(relu_forward(Tensor({3}, {-1, 0, 2})).values(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(sigmoid(0.0), 0.5);
  Tensor s = softmax_forward(Tensor({2}, {0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Activation, Properties) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = random_tensor({3, 7}, rng, -30.0, 30.0);
    Tensor r = relu_forward(x);
    EXPECT_EQ(relu_forward(r), r);

    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(sigmoid(-x[i]), 1.0 - sigmoid(x[i]), 1e-12);

    Tensor sm = softmax_forward(x, 1);
    const double c = rng.uniform(-100.0, 100.0);
    Tensor shifted = x;
    for (double& v : shifted.data()) v += c;
    Tensor sm2 = softmax_forward(shifted, 1);
    for (std::size_t row = 0; row < 3; ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) total += sm[row * 7 + j];
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
    for (std::size_t i = 0; i < sm.size(); ++i) EXPECT_NEAR(sm[i], sm2[i], 1e-9);
  }
}

TEST(Dense, Examples) {
  Tensor x({1, 2}, {1, 2});
  Tensor w({2, 1}, {1, 1});
  Tensor b({1}, {3});
  EXPECT_EQ(dense_forward(x, w, b).values(), std::vector<double>{6});

  Rng rng(2);
  Tensor in = random_tensor({4, 3}, rng);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(dense_forward(in, eye, Tensor({3})), in);

  Tensor zero({2, 3});
  Tensor bias({2}, {1.5, -2.5});
  Tensor y = dense_forward(zero, random_tensor({3, 2}, rng), bias);
  EXPECT_EQ(y.values(), (std::vector<double>{1.5, -2.5, 1.5, -2.5}));
  EXPECT_THROW(dense_forward(zero, Tensor({4, 2}), bias), ConfigError);
}

TEST(Dense, BackwardMatchesOuterProduct) {
  Tensor x({1, 3}, {1, -2, 0.5});
  Tensor w({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  Tensor dy({1, 2}, {2, -1});
  DenseGrads g = dense_backward(x, w, dy);
  // dW[i][j] = x[i] * dy[j]
  EXPECT_EQ(g.weights.values(), (std::vector<double>{2, -1, -4, 2, 1, -0.5}));
  EXPECT_EQ(g.bias.values(), (std::vector<double>{2, -1}));
  EXPECT_NEAR(g.input[0], 0.1 * 2 - 0.2, 1e-15);
  EXPECT_NEAR(g.input[1], 0.3 * 2 - 0.4, 1e-15);
  EXPECT_NEAR(g.input[2], 0.5 * 2 - 0.6, 1e-15);
}

TEST(BatchNorm, Examples) {
  Tensor x({2, 1}, {1, 3});
  Tensor gamma({1}, {1.0}), beta({1}, {0.0});
  auto r = batchnorm_forward_train(x, gamma, beta, 1e-5);
  EXPECT_NEAR(r.output[0], -1.0, 1e-5);
  EXPECT_NEAR(r.output[1], 1.0, 1e-5);

  Tensor g2({1}, {2.0}), b2({1}, {5.0});
  auto r2 = batchnorm_forward_train(x, g2, b2, 1e-5);
  EXPECT_NEAR(r2.output[0], 3.0, 2e-5);
  EXPECT_NEAR(r2.output[1], 7.0, 2e-5);

  Tensor c({4, 2, 2, 2}, 3.0);
  auto rc = batchnorm_forward_train(c, Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-5);
  for (double v : rc.output.values()) EXPECT_LE(std::abs(v), 1e-5);

  EXPECT_THROW(batchnorm_forward_train(Tensor({1, 2}), Tensor({2}, 1.0), Tensor({2}), 1e-5), ContractError);
}

TEST(BatchNorm, NormalizedStatistics) {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.below(5), c = 1 + rng.below(4), h = 2 + rng.below(3);
    Tensor x({n, c, h, h});
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double mu = rng.uniform(-10, 10), sd = rng.uniform(3, 10);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < h; ++a)
          for (std::size_t b = 0; b < h; ++b) x.at(i, ch, a, b) = mu + sd * rng.normal();
    }
    auto r = batchnorm_forward_train(x, Tensor({c}, 1.0), Tensor({c}), 1e-5);
    const Tensor& xhat = r.cache.normalized;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, sq = 0;
      const double cnt = static_cast<double>(n * h * h);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < h; ++a)
          for (std::size_t b = 0; b < h; ++b) s += xhat.at(i, ch, a, b);
      const double mean = s / cnt;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < h; ++a)
          for (std::size_t b = 0; b < h; ++b) sq += (xhat.at(i, ch, a, b) - mean) * (xhat.at(i, ch, a, b) - mean);
      EXPECT_LE(std::abs(mean), 1e-6);
      EXPECT_LE(std::abs(sq / cnt - 1.0), 1e-5);
    }
  }
}

TEST(Dropout, RateZeroAndInferenceAreIdentity) {
  Rng rng(1);
  Tensor x = random_tensor({3, 4}, rng);
  EXPECT_EQ(dropout_forward(x, 0.0, true, rng).output, x);
  EXPECT_EQ(dropout_forward(x, 0.5, false, rng).output, x);
  EXPECT_THROW(dropout_forward(x, 1.0, true, rng), ConfigError);
}

TEST(Dropout, MonteCarloMeanPreserved) {
  Rng rng(99);
  Tensor x({1}, {2.0});
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) total += dropout_forward(x, 0.5, true, rng).output[0];
  EXPECT_NEAR(total / 10000.0, 2.0, 0.02 * 2.0);
}

TEST(Dropout, SeededDeterminism) {
  Rng a(5), b(5);
  Tensor x({64}, 1.0);
  EXPECT_EQ(dropout_forward(x, 0.5, true, a).output, dropout_forward(x, 0.5, true, b).output);
}

TEST(Upsample2, Examples) {
  EXPECT_EQ(upsample2_forward(Tensor({1, 1, 1, 1}, {5})).values(), (std::vector<double>{5, 5, 5, 5}));
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor u = upsample2_forward(x);
  EXPECT_EQ(u.values(), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor t = random_tensor({2, 3, 1 + rng.below(5), 1 + rng.below(5)}, rng);
    EXPECT_EQ(maxpool_forward(upsample2_forward(t), 2).output, t);
  }
}

TEST(Bce, Examples) {
  EXPECT_LE(bce_loss(Tensor({1}, {1.0}), Tensor({1}, {1.0})).loss, 2e-7);
  EXPECT_NEAR(bce_loss(Tensor({1}, {0.5}), Tensor({1}, {1.0})).loss, std::numbers::ln2, 1e-12);
  EXPECT_EQ(bce_loss(Tensor({1}, {0.5}), Tensor({1}, {1.0})).loss,
            bce_loss(Tensor({1}, {0.5}), Tensor({1}, {0.0})).loss);
  EXPECT_THROW(bce_loss(Tensor({1}, {1.5}), Tensor({1}, {1.0})), ContractError);
  EXPECT_THROW(bce_loss(Tensor({2}, 0.5), Tensor({1}, {1.0})), ContractError);
}

TEST(Optimizer, ZeroGradientLeavesAdamParameterUnchanged) {
  Parameter p("w", ParamRole::kDense, Tensor({3}, {1.0, -2.0, 0.5}));
  Optimizer opt(OptimizerKind::kAdam, 0.001, {&p});
  opt.step();
  EXPECT_EQ(p.value.values(), (std::vector<double>{1.0, -2.0, 0.5}));
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, SgdStep) {
  Parameter p("w", ParamRole::kDense, Tensor({1}, {1.0}));
  p.gradient[0] = 2.0;
  Optimizer opt(OptimizerKind::kSgd, 0.001, {&p});
  opt.step();
  EXPECT_NEAR(p.value[0], 0.998, 1e-15);
  EXPECT_EQ(p.gradient[0], 0.0);
}

TEST(Optimizer, AdamFirstStepMagnitude) {
  for (double g : {1e-3, 0.5, -3.0, 250.0}) {
    Parameter p("w", ParamRole::kDense, Tensor({1}, {1.0}));
    p.gradient[0] = g;
    Optimizer opt(OptimizerKind::kAdam, 0.001, {&p});
    opt.step();
    const double expected = 0.001 * std::abs(g) / (std::abs(g) + 1e-8);
    EXPECT_NEAR(std::abs(p.value[0] - 1.0), expected, 1e-15);
    EXPECT_EQ(p.gradient[0], 0.0);
    EXPECT_EQ(opt.first_moments()[0].shape(), p.value.shape());
  }
}

TEST(Optimizer, StepCounterIncrementsByOne) {
  Parameter p("w", ParamRole::kDense, Tensor({2}, 1.0));
  Optimizer opt(OptimizerKind::kAdam, 0.01, {&p});
  for (int i = 1; i <= 5; ++i) {
    p.gradient.fill(0.3);
    opt.step();
    EXPECT_EQ(opt.steps(), static_cast<std::uint64_t>(i));
  }
}
