#include "dsam/ct/slice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"

namespace dsam::ct {

namespace {

void require_2d(const SliceImage& s, const char* what) {
  if (s.pixels.rank() != 2) {
    throw ContractError(std::string(what) + ": expects a [H,W] slice, got " + nn::shape_string(s.pixels.shape()));
  }
}

SliceImage derived(const SliceImage& s, nn::Tensor pixels, ValueSpace space, const std::string& step) {
  SliceImage out{std::move(pixels), space, s.provenance.empty() ? step : s.provenance + "|" + step};
  return out;
}

// Bilinear sample at fractional (y, x); returns `fill` outside [0, H-1] x [0, W-1].
double sample(const nn::Tensor& t, double y, double x, double fill) {
  const std::size_t h = t.dim(0), w = t.dim(1);
  const double eps = 1e-9;
  if (y < -eps || x < -eps || y > static_cast<double>(h - 1) + eps || x > static_cast<double>(w - 1) + eps) return fill;
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = t[y0 * w + x0] * (1 - fx) + t[y0 * w + x1] * fx;
  const double bottom = t[y1 * w + x0] * (1 - fx) + t[y1 * w + x1] * fx;
  return top * (1 - fy) + bottom * fy;
}

double minimum(const nn::Tensor& t) { return *std::min_element(t.values().begin(), t.values().end()); }

}  // namespace

SliceImage apply_window(const SliceImage& hu, double level, double width) {
  require_2d(hu, "apply_window");
  if (!(width > 0.0)) throw ConfigError("window.width must be > 0, got " + std::to_string(width));
  if (hu.space != ValueSpace::kHu) {
    throw StateError(std::string("apply_window expects HU pixels, got ") + space_name(hu.space));
  }
  nn::Tensor out(hu.pixels.shape());
  const double lo = level - width / 2.0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((hu.pixels[i] - lo) / width, 0.0, 1.0);
  return derived(hu, std::move(out), ValueSpace::kWindowed, "window(" + std::to_string(level) + "," +
                                                                 std::to_string(width) + ")");
}

SliceImage resize_bilinear(const SliceImage& s, std::size_t height, std::size_t width) {
  require_2d(s, "resize_bilinear");
  if (height == 0 || width == 0) throw ConfigError("resize target must be at least 1x1");
  const std::size_t ih = s.height(), iw = s.width();
  if (ih == height && iw == width) return s;
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);
  nn::Tensor out({height, width});
  for (std::size_t i = 0; i < height; ++i) {
    const double y = std::clamp((static_cast<double>(i) + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    for (std::size_t j = 0; j < width; ++j) {
      const double x = std::clamp((static_cast<double>(j) + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      out[i * width + j] = sample(s.pixels, y, x, 0.0);
    }
  }
  return derived(s, std::move(out), s.space, "resize(" + std::to_string(height) + "x" + std::to_string(width) + ")");
}

SliceImage zscore_normalize(const SliceImage& s) {
  require_2d(s, "zscore_normalize");
  if (s.space == ValueSpace::kRaw) throw StateError("zscore_normalize expects HU or windowed pixels, got raw");
  const double n = static_cast<double>(s.pixels.size());
  double mean = 0.0;
  for (double v : s.pixels.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s.pixels.values()) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::max(std::sqrt(var), kZscoreEps);
  nn::Tensor out(s.pixels.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (s.pixels[i] - mean) / sd;
  return derived(s, std::move(out), ValueSpace::kZscored, "zscore");
}

void AugmentationSpec::validate() const {
  if (!(zoom_min > 0.0) || !(zoom_max >= zoom_min)) {
    throw ConfigError("augment.zoom: need 0 < zoom_min <= zoom_max, got " + std::to_string(zoom_min) + ", " +
                      std::to_string(zoom_max));
  }
  for (double a : angles) {
    if (!(a >= -180.0 && a <= 360.0)) throw ConfigError("augment.angles: " + std::to_string(a) + " is out of range");
  }
}

SliceImage flip_horizontal(const SliceImage& s) {
  require_2d(s, "flip_horizontal");
  const std::size_t h = s.height(), w = s.width();
  nn::Tensor out(s.pixels.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = s.pixels[i * w + (w - 1 - j)];
  return derived(s, std::move(out), s.space, "hflip");
}

SliceImage flip_vertical(const SliceImage& s) {
  require_2d(s, "flip_vertical");
  const std::size_t h = s.height(), w = s.width();
  nn::Tensor out(s.pixels.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = s.pixels[(h - 1 - i) * w + j];
  return derived(s, std::move(out), s.space, "vflip");
}

SliceImage rotate(const SliceImage& s, double degrees) {
  require_2d(s, "rotate");
  const std::size_t h = s.height(), w = s.width();
  double turns = std::fmod(degrees, 360.0);
  if (turns < 0) turns += 360.0;
  const bool quarter = std::fmod(turns, 90.0) == 0.0;
  const std::string step = "rotate(" + std::to_string(degrees) + ")";
  if (quarter && (h == w || turns == 0.0 || turns == 180.0)) {
    const int q = static_cast<int>(turns / 90.0);
    nn::Tensor out(s.pixels.shape());
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t si = i, sj = j;
        switch (q) {
          case 1: si = j, sj = w - 1 - i; break;
          case 2: si = h - 1 - i, sj = w - 1 - j; break;
          case 3: si = h - 1 - j, sj = i; break;
          default: break;
        }
        out[i * w + j] = s.pixels[si * w + sj];
      }
    return derived(s, std::move(out), s.space, step);
  }
  const double th = degrees * std::numbers::pi / 180.0, c = std::cos(th), sn = std::sin(th);
  const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
  const double fill = minimum(s.pixels);
  nn::Tensor out(s.pixels.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double y = static_cast<double>(i) - cy, x = static_cast<double>(j) - cx;
      out[i * w + j] = sample(s.pixels, c * y + sn * x + cy, -sn * y + c * x + cx, fill);
    }
  return derived(s, std::move(out), s.space, step);
}

SliceImage zoom(const SliceImage& s, double factor) {
  require_2d(s, "zoom");
  if (!(factor > 0.0)) throw ConfigError("zoom factor must be > 0, got " + std::to_string(factor));
  if (factor == 1.0) return s;
  const std::size_t h = s.height(), w = s.width();
  const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
  const double fill = minimum(s.pixels);
  nn::Tensor out(s.pixels.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      out[i * w + j] = sample(s.pixels, (static_cast<double>(i) - cy) / factor + cy,
                              (static_cast<double>(j) - cx) / factor + cx, fill);
    }
  return derived(s, std::move(out), s.space, "zoom(" + std::to_string(factor) + ")");
}

SliceImage augment(const SliceImage& s, const AugmentationSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SliceImage out = s;
  if (spec.horizontal_flip && rng.bernoulli(0.5)) out = flip_horizontal(out);
  if (spec.vertical_flip && rng.bernoulli(0.5)) out = flip_vertical(out);
  if (!spec.angles.empty()) out = rotate(out, spec.angles[rng.below(spec.angles.size())]);
  const double factor = spec.zoom_min == spec.zoom_max ? spec.zoom_min : rng.uniform(spec.zoom_min, spec.zoom_max);
  return zoom(out, factor);
}

}  // namespace dsam::ct
