#include "dsam/ct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/nn/kernels.hpp"

namespace dsam::ct {

namespace {

void require_range(double lo, double hi, const char* field) {
  if (!(lo <= hi)) throw ConfigError(std::string(field) + ": minimum exceeds maximum");
}

struct Ellipse {
  double cy, cx, a, b, cos_t, sin_t;
  // Normalized radius: < 1 inside.
  double rho(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = cos_t * dy + sin_t * dx, v = -sin_t * dy + cos_t * dx;
    return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  }
};

}  // namespace

void PhantomSpec::validate() const {
  if (size < 8) throw ConfigError("phantom.size must be at least 8");
  if (noise_sd < 0) throw ConfigError("phantom.noise_sd must be non-negative");
  if (!(lesion_probability >= 0 && lesion_probability <= 1)) {
    throw ConfigError("phantom.lesion_probability must lie in [0,1]");
  }
  require_range(liver_hu_min, liver_hu_max, "phantom.liver_hu");
  require_range(liver_axis_min, liver_axis_max, "phantom.liver_axis");
  require_range(lesion_radius_min, lesion_radius_max, "phantom.lesion_radius");
  require_range(lesion_contrast_min, lesion_contrast_max, "phantom.lesion_contrast");
  if (liver_axis_min <= 0 || liver_axis_max + center_jitter > 0.48) {
    throw ConfigError("phantom.liver_axis: the ellipse must fit inside the image (axis_max + center_jitter <= 0.48)");
  }
  if (lesion_radius_min <= 0 || 1.5 * lesion_radius_max > liver_axis_min) {
    throw ConfigError("phantom.lesion_radius: lesions must fit inside the smallest liver (1.5 * radius_max <= axis_min)");
  }
  if (lesion_radius_min * static_cast<double>(size) < 1.0) {
    throw ConfigError("phantom.lesion_radius: minimum radius is below one pixel at this size");
  }
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const double n = static_cast<double>(spec.size);
  const double half = (n - 1) / 2;
  const double theta = rng.uniform(0.0, std::numbers::pi);
  Ellipse liver{half + rng.uniform(-spec.center_jitter, spec.center_jitter) * n,
                half + rng.uniform(-spec.center_jitter, spec.center_jitter) * n,
                rng.uniform(spec.liver_axis_min, spec.liver_axis_max) * n,
                rng.uniform(spec.liver_axis_min, spec.liver_axis_max) * n,
                std::cos(theta),
                std::sin(theta)};
  const double liver_hu = rng.uniform(spec.liver_hu_min, spec.liver_hu_max);
  const double edge = std::min(liver.a, liver.b) / 1.5;

  const bool lesion = rng.bernoulli(spec.lesion_probability);
  double ly = 0, lx = 0, lr = 0, contrast = 0;
  if (lesion) {
    lr = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max) * n;
    contrast = rng.uniform(spec.lesion_contrast_min, spec.lesion_contrast_max);
    // Centre drawn in the ellipse shrunk by the radius (plus a pixel), then
    // checked on the disc boundary.
    const Ellipse inner{liver.cy, liver.cx, liver.a - lr - 1, liver.b - lr - 1, liver.cos_t, liver.sin_t};
    for (int attempt = 0;; ++attempt) {
      const double r = std::sqrt(rng.uniform()), phi = rng.uniform(0.0, 2 * std::numbers::pi);
      const double u = r * inner.a * std::cos(phi), v = r * inner.b * std::sin(phi);
      ly = liver.cy + liver.cos_t * u - liver.sin_t * v;
      lx = liver.cx + liver.sin_t * u + liver.cos_t * v;
      bool inside = true;
      for (int k = 0; k < 32 && inside; ++k) {
        const double a = 2 * std::numbers::pi * k / 32;
        inside = liver.rho(ly + (lr + 1) * std::sin(a), lx + (lr + 1) * std::cos(a)) < 1.0;
      }
      if (inside) break;
      if (attempt > 1000) throw Error("phantom: could not place a lesion inside the liver");
    }
  }

  Phantom p;
  p.image.pixels = nn::Tensor({spec.size, spec.size});
  p.image.space = ValueSpace::kHu;
  p.image.provenance = "phantom(" + std::to_string(seed) + ")";
  p.mask.assign(spec.size * spec.size, 0);
  for (std::size_t i = 0; i < spec.size; ++i)
    for (std::size_t j = 0; j < spec.size; ++j) {
      const double y = static_cast<double>(i), x = static_cast<double>(j);
      const double w = nn::sigmoid((1.0 - liver.rho(y, x)) * edge);
      double hu = spec.background_hu + (liver_hu - spec.background_hu) * w;
      if (lesion && std::hypot(y - ly, x - lx) <= lr) {
        hu += contrast;
        p.mask[i * spec.size + j] = 1;
      }
      p.image.pixels[i * spec.size + j] = hu + spec.noise_sd * rng.normal();
    }
  p.label = std::any_of(p.mask.begin(), p.mask.end(), [](std::uint8_t m) { return m != 0; }) ? 1 : 0;
  return p;
}

}  // namespace dsam::ct
