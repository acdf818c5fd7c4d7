#include "dsam/attention/attention.hpp"

#include <algorithm>

#include "dsam/common/error.hpp"
#include "dsam/nn/kernels.hpp"

namespace dsam::attention {

namespace {

void require_features(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ConfigError(std::string(what) + ": expects [N,C,H,W], got " + nn::shape_string(t.shape()));
}

std::vector<const SpatialAttentionHead*> sorted_heads(std::span<const SpatialAttentionHead> heads) {
  std::vector<const SpatialAttentionHead*> out;
  for (const auto& h : heads) out.push_back(&h);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id() < b->id(); });
  return out;
}

void check_map(const Tensor& features, const AttentionMap& map, const char* what) {
  require_features(features, what);
  const Shape g{features.dim(0), 1, features.dim(2), features.dim(3)};
  if (map.gate.shape() != g || map.dist.shape() != Shape{features.dim(0), features.dim(2) * features.dim(3)}) {
    throw ConfigError(std::string(what) + ": attention map " + nn::shape_string(map.gate.shape()) +
                      " does not match features " + nn::shape_string(features.shape()));
  }
}

// dLoss/dGate from a multiplicative fusion: sum over channels of grad * features.
Tensor gate_grad(const Tensor& features, const Tensor& grad_out, double scale) {
  const std::size_t n = features.dim(0), c = features.dim(1), plane = features.dim(2) * features.dim(3);
  Tensor g({n, 1, features.dim(2), features.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] += grad_out[base + p] * features[base + p];
    }
  g *= scale;
  return g;
}

}  // namespace

Fusion parse_fusion(const std::string& name) {
  if (name == "multiply") return Fusion::kMultiply;
  if (name == "concat") return Fusion::kConcat;
  if (name == "both") return Fusion::kBoth;
  throw ConfigError("attention.fusion: unknown value '" + name + "' (expected multiply, concat or both)");
}

const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::kMultiply: return "multiply";
    case Fusion::kConcat: return "concat";
    case Fusion::kBoth: return "both";
  }
  return "multiply";
}

void AttentionConfig::validate(std::size_t conv_count) const {
  if (heads == 0) throw ConfigError("attention.heads: must be >= 1");
  if (hidden == 0) throw ConfigError("attention.hidden: must be >= 1");
  if (iterations > max_iterations) {
    throw ConfigError("attention.iterations: " + std::to_string(iterations) + " exceeds the maximum of " +
                      std::to_string(max_iterations));
  }
  for (std::size_t p : placements) {
    if (p == 0 || p > conv_count) {
      throw ConfigError("attention.placements: placement " + std::to_string(p) + " is outside the " +
                        std::to_string(conv_count) + " conv layers");
    }
  }
}

// ---- SpatialAttentionHead ----

SpatialAttentionHead::SpatialAttentionHead(std::size_t channels, std::size_t hidden, std::size_t id, Rng& init_rng,
                                           const std::string& name)
    : channels_(channels),
      hidden_(hidden),
      id_(id),
      conv1_w_(name + ".h" + std::to_string(id) + ".conv1.weight", nn::ParamRole::kAttention,
               Tensor({hidden, channels, 3, 3})),
      conv1_b_(name + ".h" + std::to_string(id) + ".conv1.bias", nn::ParamRole::kBias, Tensor({hidden})),
      conv2_w_(name + ".h" + std::to_string(id) + ".conv2.weight", nn::ParamRole::kAttention,
               Tensor({1, hidden, 3, 3})),
      conv2_b_(name + ".h" + std::to_string(id) + ".conv2.bias", nn::ParamRole::kBias, Tensor({1})),
      ctx_w_(name + ".h" + std::to_string(id) + ".context.weight", nn::ParamRole::kAttention, Tensor({channels, 1})),
      ctx_b_(name + ".h" + std::to_string(id) + ".context.bias", nn::ParamRole::kBias, Tensor({1})) {
  if (channels == 0 || hidden == 0) throw ConfigError("attention head: channels and hidden width must be >= 1");
  nn::he_uniform(conv1_w_.value, channels * 9, init_rng);
  nn::he_uniform(conv2_w_.value, hidden * 9, init_rng);
  nn::he_uniform(ctx_w_.value, channels, init_rng);
}

SpatialAttentionHead::SpatialAttentionHead(const SpatialAttentionHead& other) = default;

AttentionMap SpatialAttentionHead::forward(const Tensor& features, Cache* cache) const {
  require_features(features, "spatial attention");
  if (features.dim(1) != channels_) {
    throw ConfigError("spatial attention head " + std::to_string(id_) + ": expects " + std::to_string(channels_) +
                      " channels, features have " + std::to_string(features.dim(1)));
  }
  const std::size_t n = features.dim(0), h = features.dim(2), w = features.dim(3), plane = h * w;
  Tensor hidden_pre = nn::conv2d_forward(features, conv1_w_.value, conv1_b_.value, 1, 1);
  Tensor hidden = nn::relu_forward(hidden_pre);
  Tensor logits = nn::conv2d_forward(hidden, conv2_w_.value, conv2_b_.value, 1, 1);
  Tensor pooled = nn::global_avg_pool_forward(features);
  Tensor context = nn::dense_forward(pooled, ctx_w_.value, ctx_b_.value);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < plane; ++p) logits[i * plane + p] += context[i];

  AttentionMap map{nn::sigmoid_forward(logits), nn::softmax_forward(logits.reshaped({n, plane}), 1), id_};
  if (cache) {
    cache->input = features;
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
    cache->pooled = std::move(pooled);
    cache->map = map;
  }
  return map;
}

Tensor SpatialAttentionHead::backward(const Cache& cache, const Tensor& grad_gate, const Tensor& grad_dist) {
  const Tensor& x = cache.input;
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;
  Tensor d_logits = nn::sigmoid_backward(cache.map.gate, grad_gate);
  d_logits += nn::softmax_backward(cache.map.dist, grad_dist, 1).reshaped({n, 1, h, w});

  Tensor d_context({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < plane; ++p) d_context[i] += d_logits[i * plane + p];
  nn::DenseGrads dg = nn::dense_backward(cache.pooled, ctx_w_.value, d_context);
  ctx_w_.gradient += dg.weights;
  ctx_b_.gradient += dg.bias;
  Tensor dx = nn::global_avg_pool_backward(dg.input, x.shape());

  nn::Conv2dGrads g2 = nn::conv2d_backward(cache.hidden, conv2_w_.value, d_logits, 1, 1);
  conv2_w_.gradient += g2.weights;
  conv2_b_.gradient += g2.bias;
  Tensor d_hidden_pre = nn::relu_backward(cache.hidden_pre, g2.input);
  nn::Conv2dGrads g1 = nn::conv2d_backward(x, conv1_w_.value, d_hidden_pre, 1, 1);
  conv1_w_.gradient += g1.weights;
  conv1_b_.gradient += g1.bias;
  dx += g1.input;
  return dx;
}

std::vector<Parameter*> SpatialAttentionHead::parameters() {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &ctx_w_, &ctx_b_};
}

void SpatialAttentionHead::set_parameters_to_zero() {
  for (Parameter* p : parameters()) p->value.fill(0.0);
}

// ---- free functions ----

AttentionMap spatial_attention_map(const Tensor& features, const SpatialAttentionHead& head) {
  return head.forward(features);
}

Tensor fuse_multiply(const Tensor& features, const AttentionMap& map) {
  check_map(features, map, "fuse_multiply");
  const std::size_t n = features.dim(0), c = features.dim(1), plane = features.dim(2) * features.dim(3);
  Tensor out(features.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = features[base + p] * map.gate[i * plane + p];
    }
  return out;
}

Tensor fuse_concat(const Tensor& pooled, const Tensor& features, const AttentionMap& map) {
  check_map(features, map, "fuse_concat");
  const std::size_t n = features.dim(0), c = features.dim(1), plane = features.dim(2) * features.dim(3);
  if (pooled.rank() != 2 || pooled.dim(0) != n) {
    throw ConfigError("fuse_concat: pooled vector " + nn::shape_string(pooled.shape()) + " does not match batch " +
                      std::to_string(n));
  }
  const std::size_t d = pooled.dim(1);
  Tensor out({n, d + c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * (d + c) + j] = pooled[i * d + j];
    for (std::size_t ch = 0; ch < c; ++ch) {
      double a = 0.0;
      const std::size_t base = (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) a += map.dist[i * plane + p] * features[base + p];
      out[i * (d + c) + d + ch] = a;
    }
  }
  return out;
}

Tensor multi_head_attention(const Tensor& features, std::span<const SpatialAttentionHead> heads) {
  if (heads.empty()) throw ConfigError("multi_head_attention: at least one head is required");
  Tensor sum;
  for (const SpatialAttentionHead* h : sorted_heads(heads)) {
    Tensor fused = fuse_multiply(features, h->forward(features));
    if (sum.empty()) {
      sum = std::move(fused);
    } else {
      sum += fused;
    }
  }
  const double k = static_cast<double>(heads.size());
  for (double& v : sum.data()) v /= k;
  return sum;
}

Tensor iterative_refine(const Tensor& features, std::span<const SpatialAttentionHead> heads, std::size_t iterations,
                        std::size_t max_iterations) {
  if (iterations > max_iterations) {
    throw ConfigError("iterative_refine: " + std::to_string(iterations) + " iterations exceed the maximum of " +
                      std::to_string(max_iterations));
  }
  Tensor x = features;
  for (std::size_t i = 0; i < iterations; ++i) x = multi_head_attention(x, heads);
  return x;
}

// ---- AttentionBlock ----

AttentionBlock::AttentionBlock(std::size_t channels, const AttentionConfig& cfg, Rng& init_rng,
                               const std::string& name)
    : channels_(channels), iterations_(cfg.iterations) {
  if (cfg.heads == 0) throw ConfigError("attention.heads: must be >= 1");
  if (cfg.iterations > cfg.max_iterations) {
    throw ConfigError("attention.iterations: " + std::to_string(cfg.iterations) + " exceeds the maximum of " +
                      std::to_string(cfg.max_iterations));
  }
  heads_.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) heads_.emplace_back(channels, cfg.hidden, h, init_rng, name);
}

std::string AttentionBlock::describe() const {
  return "attention channels=" + std::to_string(channels_) + " heads=" + std::to_string(heads_.size()) +
         " hidden=" + std::to_string(heads_.front().hidden()) + " iterations=" + std::to_string(iterations_);
}

Shape AttentionBlock::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != channels_) {
    throw ConfigError("attention block: expects " + std::to_string(channels_) + " channels, input " +
                      nn::shape_string(input));
  }
  return input;
}

Tensor AttentionBlock::forward(const Tensor& input, const nn::ForwardContext&) {
  steps_.clear();
  Tensor x = input;
  const double k = static_cast<double>(heads_.size());
  for (std::size_t it = 0; it < iterations_; ++it) {
    Step step{x, std::vector<SpatialAttentionHead::Cache>(heads_.size())};
    Tensor sum;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      Tensor fused = fuse_multiply(x, heads_[h].forward(x, &step.caches[h]));
      if (sum.empty()) {
        sum = std::move(fused);
      } else {
        sum += fused;
      }
    }
    for (double& v : sum.data()) v /= k;
    steps_.push_back(std::move(step));
    x = std::move(sum);
  }
  return x;
}

Tensor AttentionBlock::backward(const Tensor& grad_out) {
  if (steps_.size() != iterations_) throw StateError("attention block: backward called without a cached forward pass");
  Tensor g = grad_out;
  const double inv_k = 1.0 / static_cast<double>(heads_.size());
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    const Tensor& x = it->input;
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor dx(x.shape());
    const Tensor g_gate = gate_grad(x, g, inv_k);
    const Tensor zero_dist({n, plane});
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const Tensor& gate = it->caches[h].map.gate;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (i * c + ch) * plane;
          for (std::size_t p = 0; p < plane; ++p) dx[base + p] += g[base + p] * gate[i * plane + p] * inv_k;
        }
      dx += heads_[h].backward(it->caches[h], g_gate, zero_dist);
    }
    g = std::move(dx);
  }
  return g;
}

Tensor AttentionBlock::mean_gate() const {
  if (steps_.empty()) throw StateError("attention block: no forward pass to read a gate from");
  const auto& caches = steps_.back().caches;
  Tensor g = caches.front().map.gate;
  for (std::size_t h = 1; h < caches.size(); ++h) g += caches[h].map.gate;
  g *= 1.0 / static_cast<double>(caches.size());
  return g;
}

std::vector<Parameter*> AttentionBlock::parameters() {
  std::vector<Parameter*> out;
  for (auto& h : heads_) {
    auto p = h.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// ---- AttentionPoolConcat ----

AttentionPoolConcat::AttentionPoolConcat(std::size_t channels, std::size_t heads, std::size_t hidden, Rng& init_rng,
                                         const std::string& name)
    : channels_(channels) {
  if (heads == 0) throw ConfigError("attention.heads: must be >= 1");
  heads_.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) heads_.emplace_back(channels, hidden, h, init_rng, name);
}

std::string AttentionPoolConcat::describe() const {
  return "attention_pool_concat channels=" + std::to_string(channels_) + " heads=" + std::to_string(heads_.size()) +
         " hidden=" + std::to_string(heads_.front().hidden());
}

Shape AttentionPoolConcat::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != channels_) {
    throw ConfigError("attention pool: expects " + std::to_string(channels_) + " channels, input " +
                      nn::shape_string(input));
  }
  return {2 * channels_};
}

Tensor AttentionPoolConcat::forward(const Tensor& input, const nn::ForwardContext&) {
  caches_.assign(heads_.size(), {});
  const std::size_t n = input.dim(0), c = channels_;
  const Tensor pooled = nn::global_avg_pool_forward(input);
  Tensor out({n, 2 * c});
  const double k = static_cast<double>(heads_.size());
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const AttentionMap map = heads_[h].forward(input, &caches_[h]);
    const Tensor fused = fuse_concat(pooled, input, map);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) out[i * 2 * c + c + ch] += fused[i * 2 * c + c + ch];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[i * 2 * c + ch] = pooled[i * c + ch];
      out[i * 2 * c + c + ch] /= k;
    }
  return out;
}

Tensor AttentionPoolConcat::backward(const Tensor& grad_out) {
  if (caches_.size() != heads_.size() || caches_.empty() || caches_.front().input.empty()) {
    throw StateError("attention pool: backward called without a cached forward pass");
  }
  const Tensor& x = caches_.front().input;
  const std::size_t n = x.dim(0), c = channels_, plane = x.dim(2) * x.dim(3);
  Tensor d_pooled({n, c});
  Tensor d_vec({n, c});
  const double inv_k = 1.0 / static_cast<double>(heads_.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      d_pooled[i * c + ch] = grad_out[i * 2 * c + ch];
      d_vec[i * c + ch] = grad_out[i * 2 * c + c + ch] * inv_k;
    }
  Tensor dx = nn::global_avg_pool_backward(d_pooled, x.shape());
  const Tensor zero_gate({n, 1, x.dim(2), x.dim(3)});
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const Tensor& dist = caches_[h].map.dist;
    Tensor d_dist({n, plane});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * plane;
        const double dv = d_vec[i * c + ch];
        for (std::size_t p = 0; p < plane; ++p) {
          dx[base + p] += dist[i * plane + p] * dv;
          d_dist[i * plane + p] += dv * x[base + p];
        }
      }
    dx += heads_[h].backward(caches_[h], zero_gate, d_dist);
  }
  return dx;
}

std::vector<Parameter*> AttentionPoolConcat::parameters() {
  std::vector<Parameter*> out;
  for (auto& h : heads_) {
    auto p = h.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace dsam::attention
