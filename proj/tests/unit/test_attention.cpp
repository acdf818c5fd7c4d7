#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dsam/attention/attention.hpp"
#include "dsam/common/error.hpp"
#include "dsam/nn/gradcheck.hpp"

using namespace dsam;
using namespace dsam::attention;
using dsam::nn::Tensor;

namespace {

Tensor random_tensor(nn::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

AttentionMap constant_map(std::size_t n, std::size_t h, std::size_t w, double gate) {
  AttentionMap m{Tensor({n, 1, h, w}, gate), Tensor({n, h * w}, 1.0 / static_cast<double>(h * w)), 0};
  return m;
}

std::vector<SpatialAttentionHead> make_heads(std::size_t k, std::size_t c, std::uint64_t seed) {
  Rng init(seed);
  std::vector<SpatialAttentionHead> heads;
  for (std::size_t i = 0; i < k; ++i) heads.emplace_back(c, 4, i, init);
  return heads;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(SpatialMap, DistRowsSumToOneAndGateIsOpenInterval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t c = 1 + rng.below(4);
    auto heads = make_heads(1, c, seed);
    const Tensor x = random_tensor({2, c, 5, 4}, rng, -3, 3);
    const AttentionMap m = spatial_attention_map(x, heads[0]);
    ASSERT_EQ(m.gate.shape(), (nn::Shape{2, 1, 5, 4}));
    ASSERT_EQ(m.dist.shape(), (nn::Shape{2, 20}));
    for (std::size_t n = 0; n < 2; ++n) {
      double s = 0.0;
      for (std::size_t p = 0; p < 20; ++p) {
        EXPECT_GE(m.dist[n * 20 + p], 0.0);
        s += m.dist[n * 20 + p];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SpatialMap, GateStrictlyInsideUnitIntervalOverManyDraws) {
  Rng rng(77);
  std::size_t checked = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t c = 1 + rng.below(3);
    Rng init(rng.next_u64());
    SpatialAttentionHead head(c, 2, 0, init);
    const AttentionMap m = spatial_attention_map(random_tensor({1, c, 3, 3}, rng, -2, 2), head);
    for (double g : m.gate.values()) {
      ASSERT_GT(g, 0.0);
      ASSERT_LT(g, 1.0);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 9000u);
}

TEST(SpatialMap, ZeroParametersGiveHalfGateAndUniformDist) {
  auto heads = make_heads(1, 3, 1);
  heads[0].set_parameters_to_zero();
  Rng rng(2);
  const AttentionMap m = spatial_attention_map(random_tensor({2, 3, 4, 4}, rng), heads[0]);
  for (double g : m.gate.values()) EXPECT_EQ(g, 0.5);
  for (double d : m.dist.values()) EXPECT_DOUBLE_EQ(d, 1.0 / 16.0);
}

TEST(SpatialMap, ChannelMismatchIsConfigError) {
  auto heads = make_heads(1, 3, 1);
  EXPECT_THROW(spatial_attention_map(Tensor({1, 2, 4, 4}), heads[0]), ConfigError);
}

TEST(FuseMultiply, SymmetryPointHalvesFeatures) {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  const Tensor out = fuse_multiply(x, constant_map(2, 4, 5, 0.5));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(out[i], x[i] / 2);
}

TEST(FuseMultiply, SaturatedGateIsNearIdentity) {
  auto heads = make_heads(1, 2, 4);
  for (nn::Parameter* p : heads[0].parameters()) p->value.fill(0.0);
  heads[0].parameters()[5]->value.fill(50.0);  // context bias drives logits to +50
  Rng rng(4);
  const Tensor x = random_tensor({1, 2, 3, 3}, rng);
  const Tensor out = fuse_multiply(x, spatial_attention_map(x, heads[0]));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i], 1e-15);
}

TEST(FuseMultiply, MagnitudeNeverGrows) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto heads = make_heads(1, 3, seed);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng, -5, 5);
    const Tensor out = fuse_multiply(x, spatial_attention_map(x, heads[0]));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(out[i]), std::abs(x[i]));
  }
}

TEST(FuseMultiply, DimMismatchIsConfigError) {
  EXPECT_THROW(fuse_multiply(Tensor({1, 2, 4, 4}), constant_map(1, 3, 4, 0.5)), ConfigError);
}

TEST(FuseConcat, UniformDistGivesSpatialMean) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 2, 2}, rng);
  const Tensor pooled = random_tensor({2, 4}, rng);
  const Tensor out = fuse_concat(pooled, x, constant_map(2, 2, 2, 0.5));
  ASSERT_EQ(out.shape(), (nn::Shape{2, 7}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out[n * 7 + j], pooled[n * 4 + j]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = (x.at(n, c, 0, 0) + x.at(n, c, 0, 1) + x.at(n, c, 1, 0) + x.at(n, c, 1, 1)) / 4;
      EXPECT_NEAR(out[n * 7 + 4 + c], mean, 1e-15);
    }
  }
}

TEST(FuseConcat, PointMassSelectsOnePosition) {
  Rng rng(6);
  const Tensor x = random_tensor({1, 2, 3, 3}, rng);
  AttentionMap m = constant_map(1, 3, 3, 0.5);
  m.dist.fill(0.0);
  m.dist[1 * 3 + 2] = 1.0;
  const Tensor out = fuse_concat(Tensor({1, 1}), x, m);
  EXPECT_EQ(out[1], x.at(0, 0, 1, 2));
  EXPECT_EQ(out[2], x.at(0, 1, 1, 2));
}

TEST(FuseConcat, OutputLengthIsDPlusC) {
  const Tensor out = fuse_concat(Tensor({1, 64}), Tensor({1, 128, 2, 2}), constant_map(1, 2, 2, 0.5));
  EXPECT_EQ(out.shape(), (nn::Shape{1, 192}));
  EXPECT_THROW(fuse_concat(Tensor({2, 64}), Tensor({1, 128, 2, 2}), constant_map(1, 2, 2, 0.5)), ConfigError);
}

TEST(MultiHead, SingleHeadEqualsFuseMultiplyBitwise) {
  Rng rng(7);
  auto heads = make_heads(1, 3, 7);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  EXPECT_EQ(multi_head_attention(x, heads), fuse_multiply(x, spatial_attention_map(x, heads[0])));
}

TEST(MultiHead, IdenticalHeadsEqualSingleHead) {
  Rng rng(8);
  auto one = make_heads(1, 2, 8);
  std::vector<SpatialAttentionHead> four;
  for (std::size_t i = 0; i < 4; ++i) four.push_back(one[0]);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor a = multi_head_attention(x, one), b = multi_head_attention(x, four);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(MultiHead, FourHeadsPreserveShapeAndZeroHeadsAreRejected) {
  Rng rng(9);
  auto heads = make_heads(4, 3, 9);
  const Tensor x = random_tensor({2, 3, 6, 6}, rng);
  EXPECT_EQ(multi_head_attention(x, heads).shape(), x.shape());
  EXPECT_THROW(multi_head_attention(x, std::span<const SpatialAttentionHead>{}), ConfigError);
}

TEST(MultiHead, PermutingHeadsIsBitIdentical) {
  Rng rng(10);
  auto heads = make_heads(4, 3, 10);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng);
  const Tensor ref = multi_head_attention(x, heads);
  std::vector<std::size_t> order{0, 1, 2, 3};
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(order);
    std::vector<SpatialAttentionHead> perm;
    for (std::size_t i : order) perm.push_back(heads[i]);
    EXPECT_EQ(multi_head_attention(x, perm), ref);
  }
}

TEST(IterativeRefine, ZeroAndOneIterations) {
  Rng rng(11);
  auto heads = make_heads(2, 3, 11);
  const Tensor x = random_tensor({1, 3, 4, 4}, rng);
  EXPECT_EQ(iterative_refine(x, heads, 0), x);
  EXPECT_EQ(iterative_refine(x, heads, 1), multi_head_attention(x, heads));
}

TEST(IterativeRefine, TwoZeroParameterPassesScaleByAQuarter) {
  Rng rng(12);
  auto heads = make_heads(4, 2, 12);
  for (auto& h : heads) h.set_parameters_to_zero();
  const Tensor x = random_tensor({2, 2, 3, 3}, rng);
  const Tensor out = iterative_refine(x, heads, 2);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 0.25 * x[i]);
}

TEST(IterativeRefine, ExceedingTheMaximumIsConfigError) {
  auto heads = make_heads(1, 1, 1);
  EXPECT_THROW(iterative_refine(Tensor({1, 1, 2, 2}), heads, 4), ConfigError);
  EXPECT_THROW(iterative_refine(Tensor({1, 1, 2, 2}), heads, 2, 1), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
  AttentionConfig cfg;
  EXPECT_NO_THROW(cfg.validate(4));
  cfg.placements = {7};
  try {
    cfg.validate(4);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("attention.placements"), std::string::npos);
  }
  cfg.placements = {2};
  cfg.heads = 0;
  EXPECT_THROW(cfg.validate(4), ConfigError);
  cfg.heads = 4;
  cfg.iterations = 4;
  EXPECT_THROW(cfg.validate(4), ConfigError);
  EXPECT_EQ(parse_fusion("both"), Fusion::kBoth);
  EXPECT_THROW(parse_fusion("sum"), ConfigError);
}

namespace {

nn::GradCheckReport check_layer(nn::Layer& layer, Tensor x, Rng& rng) {
  nn::ForwardContext ctx{nn::Mode::kTrain, nullptr};
  for (nn::Parameter* p : layer.parameters()) p->zero_grad();
  const Tensor y = layer.forward(x, ctx);
  const Tensor w = random_tensor(y.shape(), rng);
  std::vector<Tensor> analytic{layer.backward(w)};
  for (nn::Parameter* p : layer.parameters()) analytic.push_back(p->gradient);
  std::vector<nn::GradTarget> targets{{"input", &x, &analytic[0]}};
  std::size_t k = 1;
  for (nn::Parameter* p : layer.parameters()) targets.push_back({p->name, &p->value, &analytic[k++]});
  return nn::check_gradients([&] { return dot(w, layer.forward(x, ctx)); }, targets, {});
}

}  // namespace

TEST(AttentionGradients, BlockWithRefinementPassesGradCheck) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed + 40), init(seed);
    AttentionConfig cfg;
    cfg.heads = 1 + seed % 4;
    cfg.iterations = seed % 3 + 1;
    cfg.hidden = 3;
    AttentionBlock block(2, cfg, init);
    const nn::GradCheckReport r = check_layer(block, random_tensor({2, 2, 4, 4}, rng), rng);
    ASSERT_TRUE(r.valid) << r.fault;
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(AttentionGradients, PoolConcatPassesGradCheck) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed + 80), init(seed);
    AttentionPoolConcat pool(3, 1 + seed % 3, 3, init);
    const nn::GradCheckReport r = check_layer(pool, random_tensor({2, 3, 4, 4}, rng), rng);
    ASSERT_TRUE(r.valid) << r.fault;
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(AttentionBlock, ShapeInferenceAndStateErrors) {
  Rng init(1);
  AttentionBlock block(4, AttentionConfig{}, init);
  EXPECT_EQ(block.output_shape({4, 8, 8}), (nn::Shape{4, 8, 8}));
  EXPECT_THROW(block.output_shape({3, 8, 8}), ConfigError);
  EXPECT_THROW(block.backward(Tensor({1, 4, 8, 8})), StateError);
  AttentionPoolConcat pool(4, 2, 4, init);
  EXPECT_EQ(pool.output_shape({4, 8, 8}), (nn::Shape{8}));
  EXPECT_THROW(pool.backward(Tensor({1, 8})), StateError);
}
