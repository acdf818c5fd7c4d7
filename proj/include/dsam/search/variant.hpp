#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsam/attention/attention.hpp"
#include "dsam/nn/network.hpp"

namespace dsam::search {

enum class Version { kVer0, kVer1, kVer2, kVer3, kCustom };

Version parse_version(const std::string& name);
const char* version_name(Version v);

/// Filter schedules for the convolutional ladder.
inline const std::vector<std::size_t> kTableSchedule{32, 64, 128, 256};
inline const std::vector<std::size_t> kProseSchedule{32, 64, 128};
inline const std::vector<std::size_t> kDeskSchedule{8, 16, 32, 64};

/// A convolutional trunk plus a dense head.
///
/// `filters` has one entry per trunk conv. Consecutive convs with equal
/// filter counts form a stage; each stage ends in a max-pool. With `residual`
/// set, every conv after the first of its stage becomes an identity-skip unit
/// relu(bn(conv(x)) + x). Attention blocks run after the 1-based conv indices
/// in attention->placements. Depth counts weighted layers (trunk convs and
/// dense layers).
struct ArchitectureVariant {
  Version version = Version::kCustom;
  std::string label;  ///< display name; defaults to name()
  std::size_t depth = 0;
  nn::Shape input{1, 64, 64};
  std::vector<std::size_t> filters;
  std::size_t kernel = 3;
  std::size_t pool = 2;
  bool batchnorm = true;
  bool residual = false;
  std::optional<attention::AttentionConfig> attention;
  std::size_t dense_hidden = 64;  ///< 0 drops the hidden dense layer
  double dropout = 0.5;

  std::size_t conv_count() const { return filters.size(); }
  std::size_t dense_count() const { return dense_hidden > 0 ? 2 : 1; }
  std::size_t weighted_layers() const { return conv_count() + dense_count(); }
  std::string name() const;

  /// Throws ConfigError naming the offending field (variant.filters, variant.depth, ...).
  void validate() const;
};

/// ver0..ver3 over `schedule` (at least two stages):
///   ver0  stages 1..L-1, one conv each
///   ver1  all L stages
///   ver2  ver1 plus one residual unit in every stage after the first
///   ver3  ver2 plus multiplicative attention after conv 2
ArchitectureVariant preset(Version v, const std::vector<std::size_t>& schedule = kTableSchedule,
                           nn::Shape input = {1, 256, 256});

/// A variant with exactly `depth` weighted layers in the style of `base`
/// (batchnorm, residual, attention, head and input are copied). The trunk
/// spreads depth - dense_count() convs over min(#schedule, convs) stages: one
/// conv in the first stage, the rest balanced over the later stages with any
/// remainder going to the earliest of them.
ArchitectureVariant variant_for_depth(std::size_t depth, const ArchitectureVariant& base,
                                      const std::vector<std::size_t>& schedule = kTableSchedule);

/// Spatial size after the trunk, as [C,H,W].
nn::Shape trunk_output_shape(const ArchitectureVariant& v);

nn::Network build_variant(const ArchitectureVariant& v, std::uint64_t seed);

std::size_t parameter_count(const ArchitectureVariant& v);

nlohmann::json variant_to_json(const ArchitectureVariant& v);
ArchitectureVariant variant_from_json(const nlohmann::json& j);

/// Checkpoint descriptor: the variant (or depth-slab model) as compact JSON.
std::string descriptor(const ArchitectureVariant& v);

/// Rebuilds any model produced by build_variant or build_depth_slab from its
/// descriptor. Weights are freshly initialised; load them from a checkpoint.
nn::Network network_from_descriptor(const std::string& descriptor);

}  // namespace dsam::search
