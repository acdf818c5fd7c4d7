#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsam/ct/slice.hpp"

namespace dsam::ct {

/// Synthetic abdominal slice: noisy background, a soft-edged rotated ellipse
/// standing in for the liver and, with some probability, a hypodense disc
/// (the lesion) fully inside it. Geometry is given as fractions of `size`.
struct PhantomSpec {
  std::size_t size = 64;
  double background_hu = -90.0;
  double noise_sd = 15.0;
  double liver_hu_min = 50.0, liver_hu_max = 70.0;
  double liver_axis_min = 0.28, liver_axis_max = 0.40;  ///< semi-axes
  double center_jitter = 0.05;
  double lesion_probability = 0.5;
  double lesion_radius_min = 0.05, lesion_radius_max = 0.12;
  double lesion_contrast_min = -60.0, lesion_contrast_max = -30.0;  ///< HU relative to the liver

  /// Throws ConfigError naming the field.
  void validate() const;
};

struct Phantom {
  SliceImage image;                ///< HU space, [size,size]
  std::vector<std::uint8_t> mask;  ///< lesion pixels, row-major
  std::uint8_t label = 0;          ///< 1 iff a lesion was drawn
};

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

}  // namespace dsam::ct
