#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dsam/ct/phantom.hpp"
#include "dsam/ct/slice.hpp"
#include "dsam/ct/volume.hpp"
#include "dsam/nn/tensor.hpp"

// DSS1 preprocessed-sample container (little-endian):
//   "DSS1" | u16 version (=1) | u16 reserved | u32 count | u32 C | u32 H | u32 W
//   per sample: u16 id length | id bytes | u8 label (0, 1, 255) | u8 has_mask
//               | C*H*W f32 pixels | H*W u8 mask when has_mask
namespace dsam::ct {

inline constexpr std::uint8_t kUnlabeled = 255;

struct Sample {
  std::string id;
  nn::Tensor image;                ///< [C,H,W]
  std::uint8_t label = kUnlabeled;
  std::vector<std::uint8_t> mask;  ///< empty or H*W
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t channels, std::size_t height, std::size_t width);

  /// Checks the image shape, mask length and id uniqueness.
  void add(Sample s);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_.at(i); }
  const std::vector<Sample>& samples() const { return samples_; }

  nn::Shape sample_shape() const { return {channels_, height_, width_}; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  std::vector<std::string> ids() const;
  /// Samples with the given ids, in the order given.
  Dataset subset(const std::vector<std::string>& ids) const;
  bool has_masks() const;

  /// [n,C,H,W] stacked images and [n,1] labels for the given sample indices.
  nn::Tensor images(const std::vector<std::size_t>& indices) const;
  nn::Tensor labels(const std::vector<std::size_t>& indices) const;

 private:
  std::size_t channels_ = 0, height_ = 0, width_ = 0;
  std::vector<Sample> samples_;
  std::unordered_set<std::string> id_set_;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  VolumeLabel label = VolumeLabel::kUnlabeled;
};

/// "id,path,label" lines; '#' comments and blank lines are skipped. Relative
/// paths resolve against the manifest's directory. Label is 0, 1 or empty.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Contiguous balanced partition of [0, depth) into n slabs: slab k is
/// [floor(k*depth/n), floor((k+1)*depth/n)).
std::vector<std::pair<std::size_t, std::size_t>> slab_bounds(std::size_t depth, std::size_t n);

/// Voxel-wise mean over planes [begin, end).
nn::Tensor mean_projection(const Volume& v, std::size_t begin, std::size_t end);

struct PreprocessOptions {
  double window_level = kDefaultWindowLevel;
  double window_width = kDefaultWindowWidth;
  std::size_t height = 64, width = 64;
  /// 0: one sample per slice. n > 0: one n-channel sample per volume (mean-projected slabs).
  std::size_t slabs = 0;
};

/// HU slice -> window -> resize -> zscore.
nn::Tensor preprocess_slice(const SliceImage& hu, const PreprocessOptions& opts);

/// Converts a raw volume to HU when needed and emits slice samples ("<id>/<plane>")
/// or one slab sample ("<id>") according to `opts.slabs`.
std::vector<Sample> preprocess_volume(const Volume& v, const std::string& id, const PreprocessOptions& opts);

/// `count` phantoms seeded derive_seed(seed, kPhantom, i), preprocessed to opts.height x opts.width.
Dataset phantom_dataset(const PhantomSpec& spec, std::size_t count, std::uint64_t seed, const PreprocessOptions& opts);

}  // namespace dsam::ct
