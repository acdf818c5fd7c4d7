#include "dsam/search/variant.hpp"

#include <algorithm>

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/search/depth_slab.hpp"

namespace dsam::search {

namespace {

using attention::AttentionConfig;

bool stage_ends(const std::vector<std::size_t>& f, std::size_t i) { return i + 1 == f.size() || f[i + 1] != f[i]; }

bool is_repeat(const std::vector<std::size_t>& f, std::size_t i) { return i > 0 && f[i - 1] == f[i]; }

bool multiplicative(const ArchitectureVariant& v) {
  return v.attention && v.attention->fusion != attention::Fusion::kConcat;
}

bool pooled_head(const ArchitectureVariant& v) {
  return v.attention && v.attention->fusion != attention::Fusion::kMultiply;
}

std::vector<std::size_t> stage_schedule(const std::vector<std::size_t>& stages, const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < stages.size(); ++s) out.insert(out.end(), counts[s], stages[s]);
  return out;
}

void check_schedule(const std::vector<std::size_t>& schedule) {
  if (schedule.empty()) throw ConfigError("variant.schedule: must not be empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] == 0) throw ConfigError("variant.schedule: filter counts must be >= 1");
    if (i > 0 && schedule[i] == schedule[i - 1]) {
      throw ConfigError("variant.schedule: adjacent stages need distinct filter counts");
    }
  }
}

}  // namespace

Version parse_version(const std::string& name) {
  if (name == "ver0") return Version::kVer0;
  if (name == "ver1") return Version::kVer1;
  if (name == "ver2") return Version::kVer2;
  if (name == "ver3") return Version::kVer3;
  if (name == "custom") return Version::kCustom;
  throw ConfigError("variant.version: expected ver0, ver1, ver2, ver3 or custom, got '" + name + "'");
}

const char* version_name(Version v) {
  switch (v) {
    case Version::kVer0: return "ver0";
    case Version::kVer1: return "ver1";
    case Version::kVer2: return "ver2";
    case Version::kVer3: return "ver3";
    case Version::kCustom: return "custom";
  }
  return "custom";
}

std::string ArchitectureVariant::name() const {
  if (!label.empty()) return label;
  if (version != Version::kCustom) return version_name(version);
  return "depth" + std::to_string(depth);
}

void ArchitectureVariant::validate() const {
  if (input.size() != 3 || input[0] == 0 || input[1] == 0 || input[2] == 0) {
    throw ConfigError("variant.input: expected a non-empty [C,H,W] shape, got " + nn::shape_string(input));
  }
  if (filters.empty()) throw ConfigError("variant.filters: at least one conv layer is required");
  if (std::find(filters.begin(), filters.end(), std::size_t{0}) != filters.end()) {
    throw ConfigError("variant.filters: filter counts must be >= 1");
  }
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("variant.kernel: must be odd, got " + std::to_string(kernel));
  if (pool < 2) throw ConfigError("variant.pool: must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("variant.dropout: must lie in [0,1)");
  if (depth != weighted_layers()) {
    throw ConfigError("variant.depth: " + std::to_string(depth) + " does not match the " +
                      std::to_string(conv_count()) + " conv + " + std::to_string(dense_count()) + " dense layers");
  }
  if (attention) attention->validate(conv_count());
  std::size_t h = input[1], w = input[2];
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (!stage_ends(filters, i)) continue;
    if (h % pool != 0 || w % pool != 0) {
      throw ConfigError("variant.input: " + nn::shape_string(input) + " cannot be pooled by " + std::to_string(pool) +
                        " after conv " + std::to_string(i + 1));
    }
    h /= pool;
    w /= pool;
  }
}

ArchitectureVariant preset(Version v, const std::vector<std::size_t>& schedule, nn::Shape input) {
  check_schedule(schedule);
  if (schedule.size() < 2) throw ConfigError("variant.schedule: presets need at least two stages");
  if (v == Version::kCustom) throw ConfigError("variant.version: 'custom' has no preset");
  ArchitectureVariant a;
  a.version = v;
  a.input = std::move(input);
  const std::size_t stages = v == Version::kVer0 ? schedule.size() - 1 : schedule.size();
  const std::vector<std::size_t> used(schedule.begin(), schedule.begin() + static_cast<std::ptrdiff_t>(stages));
  std::vector<std::size_t> counts(stages, 1);
  if (v == Version::kVer2 || v == Version::kVer3) {
    std::fill(counts.begin() + 1, counts.end(), 2);
    a.residual = true;
  }
  a.filters = stage_schedule(used, counts);
  if (v == Version::kVer3) a.attention = AttentionConfig{};
  a.depth = a.weighted_layers();
  return a;
}

ArchitectureVariant variant_for_depth(std::size_t depth, const ArchitectureVariant& base,
                                      const std::vector<std::size_t>& schedule) {
  check_schedule(schedule);
  ArchitectureVariant a = base;
  a.version = Version::kCustom;
  a.label.clear();
  if (depth <= a.dense_count()) {
    throw ConfigError("search.depths: depth " + std::to_string(depth) + " leaves no room for a conv layer beside " +
                      std::to_string(a.dense_count()) + " dense layers");
  }
  const std::size_t convs = depth - a.dense_count();
  const std::size_t stages = std::min(schedule.size(), convs);
  std::vector<std::size_t> counts(stages, 1);
  if (stages > 1) {
    const std::size_t extra = convs - stages, later = stages - 1;
    for (std::size_t s = 1; s < stages; ++s) counts[s] += extra / later + ((s - 1) < extra % later ? 1 : 0);
  }
  a.filters = stage_schedule({schedule.begin(), schedule.begin() + static_cast<std::ptrdiff_t>(stages)}, counts);
  a.depth = depth;
  a.validate();
  return a;
}

nn::Shape trunk_output_shape(const ArchitectureVariant& v) {
  v.validate();
  std::size_t h = v.input[1], w = v.input[2];
  for (std::size_t i = 0; i < v.filters.size(); ++i) {
    if (stage_ends(v.filters, i)) {
      h /= v.pool;
      w /= v.pool;
    }
  }
  return {v.filters.back(), h, w};
}

nn::Network build_variant(const ArchitectureVariant& v, std::uint64_t seed) {
  v.validate();
  nn::Network net(v.input, seed, descriptor(v));
  Rng init(derive_seed(seed, Stream::kInit));
  std::size_t channels = v.input[0];
  for (std::size_t i = 0; i < v.filters.size(); ++i) {
    const std::size_t f = v.filters[i];
    const std::string tag = "conv" + std::to_string(i + 1);
    if (v.residual && is_repeat(v.filters, i)) {
      auto body = std::make_unique<nn::Sequential>("res" + std::to_string(i + 1));
      body->add(nn::Conv2d::same(channels, f, v.kernel, init, tag));
      if (v.batchnorm) body->add(std::make_unique<nn::BatchNorm>(f, nn::BatchNorm::kDefaultEps,
                                                                 nn::BatchNorm::kDefaultMomentum, tag + ".bn"));
      net.add(std::make_unique<nn::Residual>(std::move(body)));
    } else {
      net.add(nn::Conv2d::same(channels, f, v.kernel, init, tag));
      if (v.batchnorm) {
        net.add(std::make_unique<nn::BatchNorm>(f, nn::BatchNorm::kDefaultEps, nn::BatchNorm::kDefaultMomentum,
                                                tag + ".bn"));
      }
      net.add(std::make_unique<nn::ActivationLayer>(nn::Activation::kRelu));
    }
    channels = f;
    if (multiplicative(v)) {
      const auto& p = v.attention->placements;
      if (std::find(p.begin(), p.end(), i + 1) != p.end()) {
        net.add(std::make_unique<attention::AttentionBlock>(channels, *v.attention, init, "attn" + std::to_string(i + 1)));
      }
    }
    if (stage_ends(v.filters, i)) net.add(std::make_unique<nn::MaxPool>(v.pool));
  }
  std::size_t width = channels;
  if (pooled_head(v)) {
    net.add(std::make_unique<attention::AttentionPoolConcat>(channels, v.attention->heads, v.attention->hidden, init,
                                                             "attn_pool"));
    width = 2 * channels;
  } else {
    net.add(std::make_unique<nn::GlobalAvgPool>());
  }
  if (v.dense_hidden > 0) {
    net.add(std::make_unique<nn::Dense>(width, v.dense_hidden, init, "fc1"));
    net.add(std::make_unique<nn::ActivationLayer>(nn::Activation::kRelu));
    width = v.dense_hidden;
  }
  if (v.dropout > 0.0) net.add(std::make_unique<nn::Dropout>(v.dropout));
  net.add(std::make_unique<nn::Dense>(width, 1, init, "out"));
  net.add(std::make_unique<nn::ActivationLayer>(nn::Activation::kSigmoid));
  if (net.validate() != nn::Shape{1}) throw ConfigError("variant: head does not produce a scalar");
  return net;
}

std::size_t parameter_count(const ArchitectureVariant& v) { return build_variant(v, 0).parameter_count(); }

nlohmann::json variant_to_json(const ArchitectureVariant& v) {
  nlohmann::json j{{"model", "variant"},
                   {"version", version_name(v.version)},
                   {"label", v.label},
                   {"depth", v.depth},
                   {"input", v.input},
                   {"filters", v.filters},
                   {"kernel", v.kernel},
                   {"pool", v.pool},
                   {"batchnorm", v.batchnorm},
                   {"residual", v.residual},
                   {"dense_hidden", v.dense_hidden},
                   {"dropout", v.dropout}};
  if (v.attention) {
    const AttentionConfig& a = *v.attention;
    j["attention"] = {{"heads", a.heads},
                      {"placements", a.placements},
                      {"fusion", attention::fusion_name(a.fusion)},
                      {"iterations", a.iterations},
                      {"max_iterations", a.max_iterations},
                      {"hidden", a.hidden}};
  } else {
    j["attention"] = nullptr;
  }
  return j;
}

ArchitectureVariant variant_from_json(const nlohmann::json& j) {
  ArchitectureVariant v;
  try {
    v.version = parse_version(j.at("version").get<std::string>());
    v.label = j.value("label", std::string{});
    v.depth = j.at("depth").get<std::size_t>();
    v.input = j.at("input").get<nn::Shape>();
    v.filters = j.at("filters").get<std::vector<std::size_t>>();
    v.kernel = j.at("kernel").get<std::size_t>();
    v.pool = j.at("pool").get<std::size_t>();
    v.batchnorm = j.at("batchnorm").get<bool>();
    v.residual = j.at("residual").get<bool>();
    v.dense_hidden = j.at("dense_hidden").get<std::size_t>();
    v.dropout = j.at("dropout").get<double>();
    if (j.contains("attention") && !j.at("attention").is_null()) {
      const auto& a = j.at("attention");
      AttentionConfig c;
      c.heads = a.at("heads").get<std::size_t>();
      c.placements = a.at("placements").get<std::vector<std::size_t>>();
      c.fusion = attention::parse_fusion(a.at("fusion").get<std::string>());
      c.iterations = a.at("iterations").get<std::size_t>();
      c.max_iterations = a.at("max_iterations").get<std::size_t>();
      c.hidden = a.at("hidden").get<std::size_t>();
      v.attention = c;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("variant JSON: ") + e.what());
  }
  v.validate();
  return v;
}

std::string descriptor(const ArchitectureVariant& v) { return variant_to_json(v).dump(); }

nn::Network network_from_descriptor(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model descriptor is not JSON: ") + e.what(), 0);
  }
  const std::string model = j.value("model", std::string{});
  if (model == "variant") return build_variant(variant_from_json(j), 0);
  if (model == "depth_slab") return build_depth_slab(depth_slab_from_json(j), 0);
  throw ConfigError("model descriptor: unknown model '" + model + "'");
}

}  // namespace dsam::search
