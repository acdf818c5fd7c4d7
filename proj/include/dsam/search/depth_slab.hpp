#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsam/ct/dataset.hpp"
#include "dsam/ct/volume.hpp"
#include "dsam/nn/network.hpp"

namespace dsam::search {

/// Slab-fusion model: one shared extractor per depth slab, features
/// concatenated in slab order, then dense fusion and a sigmoid score.
struct DepthSlabConfig {
  std::size_t slabs = 4;
  std::vector<std::size_t> extractor_filters{16, 32};  ///< conv widths; the last is the per-slab feature width
  std::size_t kernel = 3;
  bool batchnorm = true;
  std::size_t fusion_width = 64;
  std::size_t height = 64, width = 64;

  std::size_t feature_width() const { return extractor_filters.empty() ? 0 : extractor_filters.back(); }
  /// Throws ConfigError naming the offending slab.* field.
  void validate() const;
};

nlohmann::json depth_slab_to_json(const DepthSlabConfig& c);
DepthSlabConfig depth_slab_from_json(const nlohmann::json& j);

/// Input [slabs,H,W]; layers: shared extractor (convs, 2x2 pool, global
/// average pool), fusion dense + relu, output dense + sigmoid.
nn::Network build_depth_slab(const DepthSlabConfig& c, std::uint64_t seed);

/// Slab sample of a volume: balanced slabs, mean-projected, windowed,
/// resized and z-scored. Throws ConfigError when slabs > depth.
ct::Sample depth_slab_sample(const ct::Volume& v, const std::string& id, const DepthSlabConfig& c,
                             const ct::PreprocessOptions& base = {});

/// Concatenated per-slab features, [slabs * feature_width].
std::vector<double> slab_features(nn::Network& net, const ct::Sample& sample);

/// Fixed-width depth feature vector after the fusion layer, [fusion_width].
std::vector<double> depth_slab_features(nn::Network& net, const ct::Volume& v, const DepthSlabConfig& c,
                                        const ct::PreprocessOptions& base = {});

}  // namespace dsam::search
