#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dsam/common/rng.hpp"
#include "dsam/nn/layers.hpp"
#include "dsam/nn/tensor.hpp"

namespace dsam::attention {

using nn::Parameter;
using nn::Shape;
using nn::Tensor;

enum class Fusion { kMultiply, kConcat, kBoth };

Fusion parse_fusion(const std::string& name);
const char* fusion_name(Fusion f);

struct AttentionConfig {
  std::size_t heads = 4;
  /// 1-based conv-layer indices after which a multiplicative attention block runs.
  std::vector<std::size_t> placements{2};
  Fusion fusion = Fusion::kMultiply;
  std::size_t iterations = 1;
  std::size_t max_iterations = 3;
  /// Width of the attention net's first conv.
  std::size_t hidden = 8;

  /// Throws ConfigError naming the offending field.
  void validate(std::size_t conv_count) const;
};

/// Per-position weights derived from one logit map: a sigmoid gate used by
/// multiplicative fusion and a softmax distribution used by pooled fusion.
struct AttentionMap {
  Tensor gate;  ///< [N,1,H,W], values in (0,1)
  Tensor dist;  ///< [N,H*W], rows sum to 1
  std::size_t head_id = 0;
};

/// One spatial attention head:
///   logits = conv3x3(relu(conv3x3(x))) + dense(global_avg_pool(x))
/// with a single output channel; gate = sigmoid(logits), dist = softmax(flatten(logits)).
class SpatialAttentionHead {
 public:
  struct Cache {
    Tensor input;
    Tensor hidden_pre;  ///< conv1 output before relu
    Tensor hidden;      ///< after relu
    Tensor pooled;      ///< [N,C]
    AttentionMap map;
  };

  SpatialAttentionHead(std::size_t channels, std::size_t hidden, std::size_t id, Rng& init_rng,
                       const std::string& name = "attn");

  SpatialAttentionHead(const SpatialAttentionHead& other);
  SpatialAttentionHead& operator=(const SpatialAttentionHead&) = delete;
  SpatialAttentionHead(SpatialAttentionHead&&) = default;

  AttentionMap forward(const Tensor& features, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients and returns dLoss/dFeatures through the attention net.
  Tensor backward(const Cache& cache, const Tensor& grad_gate, const Tensor& grad_dist);

  std::vector<Parameter*> parameters();
  void set_parameters_to_zero();

  std::size_t id() const { return id_; }
  std::size_t channels() const { return channels_; }
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t channels_, hidden_, id_;
  Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_, ctx_w_, ctx_b_;
};

AttentionMap spatial_attention_map(const Tensor& features, const SpatialAttentionHead& head);

/// out[n,c,h,w] = features[n,c,h,w] * gate[n,0,h,w]
Tensor fuse_multiply(const Tensor& features, const AttentionMap& map);

/// pooled ++ a, with a[n,c] = sum_p dist[n,p] * features[n,c,p].
Tensor fuse_concat(const Tensor& pooled, const Tensor& features, const AttentionMap& map);

/// Average of per-head fuse_multiply outputs, summed in ascending head-id order.
Tensor multi_head_attention(const Tensor& features, std::span<const SpatialAttentionHead> heads);

/// x_{i+1} = multi_head_attention(x_i), shared parameters, `iterations` times.
Tensor iterative_refine(const Tensor& features, std::span<const SpatialAttentionHead> heads, std::size_t iterations,
                        std::size_t max_iterations = 3);

/// Multiplicative multi-head attention with iterative refinement, as a network layer.
class AttentionBlock final : public nn::Layer {
 public:
  AttentionBlock(std::size_t channels, const AttentionConfig& cfg, Rng& init_rng, const std::string& name = "attn");

  std::string kind() const override { return "attention"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const nn::ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void clear_cache() override { steps_.clear(); }

  std::vector<SpatialAttentionHead>& heads() { return heads_; }
  /// Head-averaged gate [N,1,H,W] of the final iteration of the last forward pass.
  Tensor mean_gate() const;

 private:
  struct Step {
    Tensor input;
    std::vector<SpatialAttentionHead::Cache> caches;
  };

  std::size_t channels_, iterations_;
  std::vector<SpatialAttentionHead> heads_;
  std::vector<Step> steps_;
};

/// Pooled-vector fusion head: [N,C,H,W] -> global_avg_pool(x) ++ attention vector, i.e. [N,2C].
/// The attention vector is the dist-weighted spatial pooling averaged over heads.
class AttentionPoolConcat final : public nn::Layer {
 public:
  AttentionPoolConcat(std::size_t channels, std::size_t heads, std::size_t hidden, Rng& init_rng,
                      const std::string& name = "attn_pool");

  std::string kind() const override { return "attention_pool_concat"; }
  std::string describe() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, const nn::ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void clear_cache() override { caches_.clear(); }

  std::vector<SpatialAttentionHead>& heads() { return heads_; }

 private:
  std::size_t channels_;
  std::vector<SpatialAttentionHead> heads_;
  std::vector<SpatialAttentionHead::Cache> caches_;
};

}  // namespace dsam::attention
