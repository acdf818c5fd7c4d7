#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/nn/checkpoint.hpp"
#include "dsam/nn/gradcheck.hpp"
#include "dsam/nn/layers.hpp"
#include "dsam/nn/loss.hpp"
#include "dsam/nn/network.hpp"
#include "support/oracles.hpp"

using namespace dsam;
using namespace dsam::nn;
using oracle::away_from_zero;
using oracle::check_layer;
using oracle::random_tensor;
using oracle::separated;

namespace {

Network dense_net(const std::string& descriptor = "dense 2->1 sigmoid") {
  Rng init(11);
  Network net({2}, 5, descriptor);
  net.add(std::make_unique<Dense>(2, 1, init));
  net.add(std::make_unique<ActivationLayer>(Activation::kSigmoid));
  return net;
}

Network small_cnn(std::uint64_t seed, double dropout) {
  Rng init(derive_seed(seed, Stream::kInit));
  Network net({1, 8, 8}, seed, "small-cnn");
  net.add(Conv2d::same(1, 4, 3, init, "c1"));
  net.add(std::make_unique<BatchNorm>(4));
  net.add(std::make_unique<ActivationLayer>(Activation::kRelu));
  net.add(std::make_unique<MaxPool>(2));
  net.add(std::make_unique<GlobalAvgPool>());
  net.add(std::make_unique<Dense>(4, 3, init, "d1"));
  net.add(std::make_unique<ActivationLayer>(Activation::kRelu));
  net.add(std::make_unique<Dropout>(dropout));
  net.add(std::make_unique<Dense>(3, 1, init, "d2"));
  net.add(std::make_unique<ActivationLayer>(Activation::kSigmoid));
  return net;
}

}  // namespace

TEST(Backward, ZeroLossGradientGivesZeroParameterGradients) {
  Network net = small_cnn(3, 0.0);
  Rng rng(1);
  net.set_mode(Mode::kTrain);
  const Tensor y = net.forward(random_tensor({4, 1, 8, 8}, rng));
  net.backward(Tensor(y.shape()));
  for (Parameter* p : net.trainable_parameters())
    for (double g : p->gradient.values()) EXPECT_EQ(g, 0.0) << p->name;
}

TEST(Backward, SingleDenseMatchesOuterProduct) {
  Rng init(2);
  Network net({3}, 1);
  net.add(std::make_unique<Dense>(3, 2, init));
  net.set_mode(Mode::kTrain);
  const Tensor x({2, 3}, std::vector<double>{1, 2, 3, -1, 0, 4});
  const Tensor g({2, 2}, std::vector<double>{0.5, -1, 2, 0.25});
  net.forward(x);
  net.backward(g);
  Parameter* w = net.parameters()[0];
  Parameter* b = net.parameters()[1];
  // dW[i][j] = sum_n x[n][i] * g[n][j]
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_DOUBLE_EQ(w->gradient[i * 2 + j], x[i] * g[j] + x[3 + i] * g[2 + j]);
  EXPECT_DOUBLE_EQ(b->gradient[0], 2.5);
  EXPECT_DOUBLE_EQ(b->gradient[1], -0.75);
}

TEST(Backward, WithoutForwardIsStateError) {
  Network net = dense_net();
  EXPECT_THROW(net.backward(Tensor({1, 1})), StateError);
  net.set_mode(Mode::kInference);
  Rng rng(1);
  net.forward(random_tensor({1, 2}, rng));
  EXPECT_THROW(net.backward(Tensor({1, 1})), StateError);
}

TEST(Backward, LayerWithoutCacheIsStateError) {
  Rng init(1);
  Conv2d conv(1, 2, 3, 1, 1, init);
  EXPECT_THROW(conv.backward(Tensor({1, 2, 4, 4})), StateError);
  MaxPool pool(2);
  EXPECT_THROW(pool.backward(Tensor({1, 1, 2, 2})), StateError);
}

TEST(Network, InputShapeMismatchIsRejected) {
  Network net = small_cnn(1, 0.0);
  EXPECT_THROW(net.forward(Tensor({2, 1, 6, 6})), ConfigError);
}

TEST(Network, ValidateReportsOutputShape) {
  Network net = small_cnn(1, 0.2);
  EXPECT_EQ(net.validate(), (Shape{1}));
  Network bad({1, 8, 8}, 1);
  Rng init(1);
  bad.add(Conv2d::same(1, 4, 3, init));
  bad.add(Conv2d::same(3, 4, 3, init));
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Network, SameSeedIsBitIdenticalIncludingDropout) {
  Rng rng(9);
  const Tensor x = random_tensor({4, 1, 8, 8}, rng);
  Network a = small_cnn(21, 0.5), b = small_cnn(21, 0.5);
  a.set_mode(Mode::kTrain);
  b.set_mode(Mode::kTrain);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_EQ(a.forward(x), b.forward(x));
}

TEST(GradCheck, LinearModelWithBceIsTight) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Network net = dense_net();
    Rng rng(seed);
    const Tensor x = random_tensor({5, 2}, rng, -2, 2);
    Tensor y({5, 1});
    for (double& v : y.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const GradCheckReport r = grad_check(net, x, y, {});
    ASSERT_TRUE(r.valid) << r.fault;
    EXPECT_LE(r.max_rel_error, 1e-6) << "seed " << seed;
  }
}

TEST(GradCheck, ConvBatchNormDropoutStack) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Network net = small_cnn(seed, 0.3);
    Rng rng(100 + seed);
    const Tensor x = random_tensor({4, 1, 8, 8}, rng);
    const Tensor y({4, 1}, std::vector<double>{1, 0, 1, 0});
    const GradCheckReport r = grad_check(net, x, y, {});
    ASSERT_TRUE(r.valid) << r.fault;
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, UnfrozenDropoutIsFlaggedInvalid) {
  Network net = small_cnn(4, 0.5);
  Rng rng(4);
  const Tensor x = random_tensor({4, 1, 8, 8}, rng);
  const Tensor y({4, 1}, std::vector<double>{1, 0, 1, 0});
  GradCheckOptions opts;
  opts.freeze_dropout = false;
  const GradCheckReport r = grad_check(net, x, y, opts);
  EXPECT_FALSE(r.valid);
  EXPECT_FALSE(r.passed(1e-4));
  opts.freeze_dropout = true;
  EXPECT_TRUE(grad_check(net, x, y, opts).passed(1e-4));
}

TEST(GradCheck, NonFiniteLossIsAFault) {
  double value = 1.0;
  Tensor v({1}, 1.0), g({1}, 1.0);
  auto loss = [&] { return std::log(-value); };
  const GradCheckReport r = check_gradients(loss, {{"v", &v, &g}}, {});
  EXPECT_FALSE(r.valid);
  EXPECT_FALSE(r.fault.empty());
}

// Every differentiable kernel, 100 seeds each. Piecewise-linear ops at 1e-6.
TEST(GradCheckProperty, KernelsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, Stream::kInit));
    Rng init(seed);
    const std::size_t n = 2 + rng.below(3), c = 1 + rng.below(3), h = 2 * (1 + rng.below(3)), w = 2 * (1 + rng.below(3));
    auto expect = [&](Layer& layer, Tensor x, double tol) {
      const GradCheckReport r = check_layer(layer, std::move(x), rng, seed);
      ASSERT_TRUE(r.valid) << layer.kind() << " seed " << seed << ": " << r.fault;
      EXPECT_LE(r.max_rel_error, tol) << layer.kind() << " seed " << seed;
    };
    {
      const std::size_t k = 1 + 2 * rng.below(2);
      Conv2d conv(c, 1 + rng.below(3), k, 1, k / 2, init);
      expect(conv, random_tensor({n, c, h, w}, rng), 1e-6);
    }
    {
      Dense dense(c * 2, 3, init);
      expect(dense, random_tensor({n, c * 2}, rng), 1e-6);
    }
    {
      MaxPool pool(2);
      expect(pool, separated({n, c, h, w}, rng), 1e-6);
    }
    {
      ActivationLayer relu(Activation::kRelu);
      expect(relu, away_from_zero({n, c, h, w}, rng), 1e-6);
    }
    {
      ActivationLayer sig(Activation::kSigmoid);
      expect(sig, random_tensor({n, c}, rng, -3, 3), 1e-4);
    }
    {
      ActivationLayer soft(Activation::kSoftmax);
      expect(soft, random_tensor({n, c + 1}, rng, -3, 3), 1e-4);
    }
    {
      BatchNorm bn(c);
      for (double& v : bn.gamma().value.data()) v = rng.uniform(0.5, 1.5);
      for (double& v : bn.beta().value.data()) v = rng.uniform(-0.5, 0.5);
      expect(bn, random_tensor({n, c, h, w}, rng), 1e-4);
    }
    {
      Dropout drop(0.4);
      expect(drop, random_tensor({n, c, h, w}, rng), 1e-6);
    }
    {
      Upsample2 up;
      expect(up, random_tensor({n, c, h / 2, w / 2}, rng), 1e-6);
    }
    {
      GlobalAvgPool gap;
      expect(gap, random_tensor({n, c, h, w}, rng), 1e-6);
    }
  }
}

TEST(GradCheckProperty, CompositeBlocks) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 500);
    Rng init(seed);
    auto body = std::make_unique<Sequential>("res");
    body->add(Conv2d::same(3, 3, 3, init));
    body->add(std::make_unique<BatchNorm>(3));
    Residual res(std::move(body));
    const GradCheckReport r = check_layer(res, random_tensor({3, 3, 4, 4}, rng), rng, seed);
    ASSERT_TRUE(r.valid) << r.fault;
    EXPECT_LE(r.max_rel_error, 1e-4) << "residual seed " << seed;

    auto ext = std::make_unique<Sequential>("ext");
    ext->add(Conv2d::same(1, 2, 3, init));
    ext->add(std::make_unique<ActivationLayer>(Activation::kSigmoid));
    ext->add(std::make_unique<GlobalAvgPool>());
    SharedPerChannel shared(std::move(ext));
    const GradCheckReport r2 = check_layer(shared, random_tensor({2, 3, 4, 4}, rng), rng, seed);
    ASSERT_TRUE(r2.valid) << r2.fault;
    EXPECT_LE(r2.max_rel_error, 1e-4) << "shared seed " << seed;
  }
}

// ---- checkpoints ----

TEST(Checkpoint, GoldenFileDecodesToKnownValues) {
  const auto bytes = read_file(std::filesystem::path(DSAM_GOLDEN_DIR) / "dense_2x1.dsnn");
  const Checkpoint c = decode_checkpoint(bytes);
  EXPECT_EQ(c.version, 1);
  EXPECT_EQ(c.descriptor, "dense 2->1 sigmoid");
  ASSERT_EQ(c.tensors.size(), 2u);
  EXPECT_EQ(c.tensors[0].role, ParamRole::kDense);
  EXPECT_EQ(c.tensors[0].shape, (Shape{2, 1}));
  EXPECT_EQ(c.tensors[0].values, (std::vector<float>{0.5f, -1.25f}));
  EXPECT_EQ(c.tensors[1].role, ParamRole::kBias);
  EXPECT_EQ(c.tensors[1].values, (std::vector<float>{0.25f}));

  Network net = dense_net();
  apply_checkpoint(net, c);
  EXPECT_EQ(encode_checkpoint(capture_checkpoint(net)), bytes);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  const auto dir = std::filesystem::temp_directory_path() / "dsam_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.dsnn";
  Network net = small_cnn(8, 0.2);
  Rng rng(8);
  const Tensor x = random_tensor({4, 1, 8, 8}, rng);
  net.set_mode(Mode::kTrain);
  net.forward(x);  // moves the batchnorm running statistics off their defaults
  // Round the live weights to f32 so the reloaded network matches exactly.
  for (Parameter* p : net.parameters())
    for (double& v : p->value.data()) v = static_cast<double>(static_cast<float>(v));
  save_checkpoint(net, path);

  std::string seen;
  Network back = load_checkpoint(path, [&](const std::string& d) {
    seen = d;
    return small_cnn(99, 0.2);
  });
  EXPECT_EQ(seen, "small-cnn");
  auto pa = net.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  net.set_mode(Mode::kInference);
  back.set_mode(Mode::kInference);
  EXPECT_EQ(net.forward(x), back.forward(x));

  save_checkpoint(back, dir / "again.dsnn");
  EXPECT_EQ(read_file(path), read_file(dir / "again.dsnn"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsAFormatError) {
  Network net = dense_net();
  auto bytes = encode_checkpoint(capture_checkpoint(net));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_checkpoint(bad_magic);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  auto bad_version = bytes;
  bad_version[4] = 7;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}

TEST(Checkpoint, ArchitectureMismatchIsAConfigError) {
  Network net = dense_net();
  const Checkpoint c = capture_checkpoint(net);
  Network other = small_cnn(1, 0.0);
  EXPECT_THROW(apply_checkpoint(other, c), ConfigError);

  Checkpoint wrong_role = c;
  wrong_role.tensors[0].role = ParamRole::kKernel;
  EXPECT_THROW(apply_checkpoint(net, wrong_role), ConfigError);

  Checkpoint wrong_shape = c;
  wrong_shape.tensors[0].shape = {1, 2};
  EXPECT_THROW(apply_checkpoint(net, wrong_shape), ConfigError);
}

TEST(Checkpoint, MissingFileIsAContractError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.dsnn", [](const std::string&) { return dense_net(); }),
               ContractError);
}
