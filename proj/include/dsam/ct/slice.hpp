#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsam/ct/volume.hpp"
#include "dsam/nn/tensor.hpp"

namespace dsam::ct {

/// A 2-D image [H,W] tagged with the value space its pixels live in.
struct SliceImage {
  nn::Tensor pixels;
  ValueSpace space = ValueSpace::kHu;
  std::string provenance;

  std::size_t height() const { return pixels.dim(0); }
  std::size_t width() const { return pixels.dim(1); }
};

inline constexpr double kDefaultWindowLevel = 60.0;
inline constexpr double kDefaultWindowWidth = 200.0;
inline constexpr double kZscoreEps = 1e-8;

/// clamp((hu - (level - width/2)) / width, 0, 1). Input must be HU.
SliceImage apply_window(const SliceImage& hu, double level = kDefaultWindowLevel, double width = kDefaultWindowWidth);

/// Half-pixel-centred bilinear resampling; source coordinates are clamped to the image.
SliceImage resize_bilinear(const SliceImage& s, std::size_t height, std::size_t width);

/// (x - mean) / max(stddev, 1e-8) over the whole slice. Raw input is rejected.
SliceImage zscore_normalize(const SliceImage& s);

struct AugmentationSpec {
  bool horizontal_flip = true;
  bool vertical_flip = true;
  std::vector<double> angles{0.0, 90.0, 180.0, 270.0};  ///< degrees in [-180, 360)
  double zoom_min = 1.0;
  double zoom_max = 1.0;

  void validate() const;
};

SliceImage flip_horizontal(const SliceImage& s);
SliceImage flip_vertical(const SliceImage& s);
/// Counter-clockwise rotation about the image centre. Multiples of 90 degrees on
/// square images are exact index permutations; other angles resample bilinearly
/// with out-of-range pixels filled by the slice minimum.
SliceImage rotate(const SliceImage& s, double degrees);
/// Scales content about the centre and crops or pads back to the original size.
SliceImage zoom(const SliceImage& s, double factor);

/// Seeded random flip / rotation / zoom drawn from `spec`.
SliceImage augment(const SliceImage& s, const AugmentationSpec& spec, std::uint64_t seed);

}  // namespace dsam::ct
