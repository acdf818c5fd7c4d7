#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsam/nn/tensor.hpp"

// CTV1 volume container (little-endian):
//   0  "CTV1"
//   4  u16 version (=1)
//   6  u16 reserved (=0)
//   8  u32 D, u32 H, u32 W
//   20 u8 value space (0 = raw int16, 1 = HU float32)
//   21 u8 label (0 absent, 1 present, 255 unlabeled)
//   22 f32 rescale slope
//   26 f32 rescale intercept
//   30 2 zero bytes
//   32 D*H*W voxels, row-major, W fastest
namespace dsam::ct {

enum class ValueSpace : std::uint8_t { kRaw = 0, kHu = 1, kWindowed = 2, kZscored = 3 };

const char* space_name(ValueSpace s);

enum class VolumeLabel : std::uint8_t { kAbsent = 0, kPresent = 1, kUnlabeled = 255 };

inline constexpr std::size_t kCtv1HeaderSize = 32;
inline constexpr std::uint16_t kCtv1Version = 1;

struct Volume {
  std::size_t depth = 0, height = 0, width = 0;
  std::vector<double> voxels;
  ValueSpace space = ValueSpace::kRaw;
  double slope = 1.0;
  double intercept = 0.0;
  VolumeLabel label = VolumeLabel::kUnlabeled;

  /// Throws ContractError on zero dims, a voxel count mismatch, slope 0 or a non-file value space.
  void validate() const;
  double at(std::size_t d, std::size_t h, std::size_t w) const { return voxels[(d * height + h) * width + w]; }
  /// One depth plane as [H,W].
  nn::Tensor plane(std::size_t d) const;
};

std::vector<std::uint8_t> encode_volume(const Volume& v);
Volume decode_volume(const std::vector<std::uint8_t>& bytes);

void write_volume(const Volume& v, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);

/// hu = raw * slope + intercept. Throws StateError unless the volume is raw.
Volume to_hounsfield(const Volume& v);

}  // namespace dsam::ct
