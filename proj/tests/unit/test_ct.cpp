#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/ct/dataset.hpp"
#include "dsam/ct/phantom.hpp"
#include "dsam/ct/slice.hpp"
#include "dsam/ct/split.hpp"
#include "dsam/ct/volume.hpp"

using namespace dsam;
using namespace dsam::ct;
using nn::Tensor;

namespace {

const std::filesystem::path kGolden = DSAM_GOLDEN_DIR;

SliceImage hu_slice(std::size_t h, std::size_t w, std::vector<double> v) {
  return {Tensor({h, w}, std::move(v)), ValueSpace::kHu, "test"};
}

SliceImage random_slice(std::size_t h, std::size_t w, Rng& rng) {
  Tensor t({h, w});
  for (double& v : t.data()) v = rng.uniform(-200, 300);
  return {t, ValueSpace::kHu, "random"};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("dsam_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

// ---- CTV1 ----

TEST(VolumeIo, TwoCubedHuVolumeIs64Bytes) {
  Volume v{2, 2, 2, std::vector<double>(8, 7.0), ValueSpace::kHu, 1.0, 0.0, VolumeLabel::kPresent};
  const auto bytes = encode_volume(v);
  EXPECT_EQ(bytes.size(), 32u + 8 * 4);
  EXPECT_EQ(bytes, read_file(kGolden / "hu_2x2x2.ctv1"));
}

TEST(VolumeIo, GoldenFilesRoundTripByteForByte) {
  for (const char* name : {"hu_2x2x2.ctv1", "raw_1x2x3.ctv1"}) {
    const auto bytes = read_file(kGolden / name);
    EXPECT_EQ(encode_volume(decode_volume(bytes)), bytes) << name;
  }
  const Volume raw = read_volume(kGolden / "raw_1x2x3.ctv1");
  EXPECT_EQ(raw.space, ValueSpace::kRaw);
  EXPECT_EQ(raw.label, VolumeLabel::kAbsent);
  EXPECT_EQ(raw.intercept, -1024.0);
  EXPECT_EQ(raw.voxels, (std::vector<double>{0, 1024, -1024, 5, 32767, -32768}));
}

TEST(VolumeIo, RandomVolumesRoundTripBitExactly) {
  Rng rng(3);
  const auto dir = temp_dir("ctv1");
  for (int trial = 0; trial < 50; ++trial) {
    Volume v;
    v.depth = 1 + rng.below(4);
    v.height = 1 + rng.below(6);
    v.width = 1 + rng.below(6);
    v.space = rng.bernoulli(0.5) ? ValueSpace::kRaw : ValueSpace::kHu;
    v.slope = static_cast<float>(rng.uniform(0.5, 2.0));
    v.intercept = static_cast<float>(rng.uniform(-1100, 0));
    v.label = static_cast<VolumeLabel>(std::array<std::uint8_t, 3>{0, 1, 255}[rng.below(3)]);
    for (std::size_t i = 0; i < v.depth * v.height * v.width; ++i) {
      v.voxels.push_back(v.space == ValueSpace::kRaw ? std::round(rng.uniform(-32768, 32767))
                                                     : static_cast<float>(rng.uniform(-1000, 3000)));
    }
    write_volume(v, dir / "v.ctv1");
    const Volume back = read_volume(dir / "v.ctv1");
    EXPECT_EQ(back.voxels, v.voxels);
    EXPECT_EQ(back.slope, v.slope);
    EXPECT_EQ(back.intercept, v.intercept);
    EXPECT_EQ(back.label, v.label);
    EXPECT_EQ(encode_volume(back), read_file(dir / "v.ctv1"));
  }
  std::filesystem::remove_all(dir);
}

TEST(VolumeIo, ParseErrorsCarryOffsets) {
  auto bytes = read_file(kGolden / "hu_2x2x2.ctv1");
  auto bad = bytes;
  std::copy_n("XXXX", 4, bad.begin());
  try {
    decode_volume(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_STREQ(e.what(), "bad magic at offset 0");
  }

  auto truncated = bytes;
  truncated.resize(60);
  try {
    decode_volume(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 32u);
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }

  auto longer = bytes;
  longer.resize(68);
  try {
    decode_volume(longer);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 64u);
    EXPECT_NE(std::string(e.what()).find("dim/payload mismatch"), std::string::npos);
  }

  auto short_header = bytes;
  short_header.resize(20);
  EXPECT_THROW(decode_volume(short_header), FormatError);
  auto bad_space = bytes;
  bad_space[20] = 9;
  EXPECT_THROW(decode_volume(bad_space), FormatError);
  auto padding = bytes;
  padding[31] = 1;
  EXPECT_THROW(decode_volume(padding), FormatError);
}

TEST(Hounsfield, LinearRescale) {
  Volume v{1, 1, 3, {1024, 0, 5}, ValueSpace::kRaw, 1.0, -1024.0, VolumeLabel::kUnlabeled};
  const Volume hu = to_hounsfield(v);
  EXPECT_EQ(hu.space, ValueSpace::kHu);
  EXPECT_EQ(hu.voxels, (std::vector<double>{0, -1024, -1019}));
  Volume id{1, 1, 2, {3, -4}, ValueSpace::kRaw, 1.0, 0.0, VolumeLabel::kUnlabeled};
  EXPECT_EQ(to_hounsfield(id).voxels, id.voxels);
  EXPECT_THROW(to_hounsfield(hu), StateError);
}

// ---- slice transforms ----

TEST(Window, ClampLine) {
  const SliceImage w = apply_window(hu_slice(1, 5, {-40, 160, 60, -1000, 3000}), 60, 200);
  EXPECT_EQ(w.space, ValueSpace::kWindowed);
  EXPECT_EQ(w.pixels.values()[0], 0.0);
  EXPECT_EQ(w.pixels.values()[1], 1.0);
  EXPECT_EQ(w.pixels.values()[2], 0.5);
  EXPECT_EQ(w.pixels.values()[3], 0.0);
  EXPECT_EQ(w.pixels.values()[4], 1.0);
  EXPECT_THROW(apply_window(hu_slice(1, 1, {0}), 60, 0), ConfigError);
  EXPECT_THROW(apply_window(w, 60, 200), StateError);
}

TEST(Window, MonotoneInHu) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-1500, 3000), b = rng.uniform(-1500, 3000);
    const SliceImage w = apply_window(hu_slice(1, 2, {std::min(a, b), std::max(a, b)}));
    EXPECT_LE(w.pixels[0], w.pixels[1]);
  }
}

TEST(Resize, Examples) {
  Rng rng(6);
  const SliceImage s = random_slice(5, 7, rng);
  EXPECT_EQ(resize_bilinear(s, 5, 7).pixels, s.pixels);
  const SliceImage half = resize_bilinear(hu_slice(2, 2, {0, 0, 2, 2}), 1, 1);
  EXPECT_EQ(half.pixels.values()[0], 1.0);
  const SliceImage c = resize_bilinear(hu_slice(3, 3, std::vector<double>(9, 4.5)), 8, 5);
  for (double v : c.pixels.values()) EXPECT_DOUBLE_EQ(v, 4.5);
}

TEST(Resize, UpsamplingMatchesHandInterpolation) {
  // 1x2 [0, 4] -> 1x4: centres map to x = -0.25, 0.25, 0.75, 1.25 -> clamp -> 0, 1, 3, 4.
  const SliceImage out = resize_bilinear(hu_slice(1, 2, {0, 4}), 1, 4);
  EXPECT_EQ(out.pixels.values()[0], 0.0);
  EXPECT_EQ(out.pixels.values()[1], 1.0);
  EXPECT_EQ(out.pixels.values()[2], 3.0);
  EXPECT_EQ(out.pixels.values()[3], 4.0);
}

TEST(Zscore, Examples) {
  const SliceImage c = zscore_normalize(hu_slice(2, 2, std::vector<double>(4, 3.0)));
  for (double v : c.pixels.values()) EXPECT_EQ(v, 0.0);
  const SliceImage two = zscore_normalize(hu_slice(1, 2, {0, 2}));
  EXPECT_EQ(two.pixels.values()[0], -1.0);
  EXPECT_EQ(two.pixels.values()[1], 1.0);
  EXPECT_THROW(zscore_normalize({Tensor({1, 2}), ValueSpace::kRaw, ""}), StateError);
}

TEST(Zscore, MomentsAndOrderingProperty) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const SliceImage s = random_slice(1 + rng.below(9), 2 + rng.below(9), rng);
    const SliceImage z = zscore_normalize(s);
    double mean = 0, var = 0;
    for (double v : z.pixels.values()) mean += v;
    mean /= static_cast<double>(z.pixels.size());
    for (double v : z.pixels.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.pixels.size());
    EXPECT_LE(std::abs(mean), 1e-9);
    EXPECT_LE(std::abs(var - 1), 1e-6);
    for (std::size_t i = 1; i < s.pixels.size(); ++i)
      EXPECT_EQ(s.pixels[i - 1] < s.pixels[i], z.pixels[i - 1] < z.pixels[i]);
  }
}

TEST(Augment, FlipsAreInvolutionsAndRotationsCompose) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(7);
    const SliceImage s = random_slice(n, rng.bernoulli(0.5) ? n : n + 2, rng);
    EXPECT_EQ(flip_horizontal(flip_horizontal(s)).pixels, s.pixels);
    EXPECT_EQ(flip_vertical(flip_vertical(s)).pixels, s.pixels);
    const SliceImage sq = random_slice(n, n, rng);
    SliceImage r = sq;
    for (int k = 0; k < 4; ++k) r = rotate(r, 90);
    EXPECT_EQ(r.pixels, sq.pixels);
    EXPECT_EQ(rotate(rotate(sq, 90), 270).pixels, sq.pixels);
  }
}

TEST(Augment, NinetyDegreeExampleAndNeutralParameters) {
  const SliceImage s = hu_slice(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(rotate(s, 90).pixels.values()[0], 2.0);
  EXPECT_EQ(rotate(s, 90).pixels, Tensor({2, 2}, std::vector<double>{2, 4, 1, 3}));
  Rng rng(9);
  const SliceImage r = random_slice(6, 5, rng);
  EXPECT_EQ(rotate(r, 0).pixels, r.pixels);
  EXPECT_EQ(zoom(r, 1.0).pixels, r.pixels);
  AugmentationSpec neutral{false, false, {0.0}, 1.0, 1.0};
  EXPECT_EQ(augment(r, neutral, 42).pixels, r.pixels);
}

TEST(Augment, GeneralRotationAndZoomKeepSizeAndAreSeeded) {
  Rng rng(10);
  const SliceImage s = random_slice(9, 9, rng);
  EXPECT_EQ(rotate(s, 33).pixels.shape(), s.pixels.shape());
  EXPECT_EQ(zoom(s, 1.3).pixels.shape(), s.pixels.shape());
  EXPECT_EQ(zoom(s, 0.7).pixels.shape(), s.pixels.shape());
  // The centre pixel of an odd image is fixed by rotation and zoom.
  EXPECT_NEAR(rotate(s, 33).pixels[40], s.pixels[40], 1e-9);
  EXPECT_NEAR(zoom(s, 1.7).pixels[40], s.pixels[40], 1e-9);
  AugmentationSpec spec{true, true, {-20, 0, 15}, 0.9, 1.1};
  EXPECT_EQ(augment(s, spec, 5).pixels, augment(s, spec, 5).pixels);
  AugmentationSpec bad = spec;
  bad.zoom_min = 0;
  EXPECT_THROW(augment(s, bad, 5), ConfigError);
}

// ---- split ----

TEST(Split, FloorAndRemainder) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("id" + std::to_string(i));
  const DatasetSplit s = split_dataset(ids, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  const DatasetSplit again = split_dataset(ids, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.test, again.test);
  EXPECT_THROW(split_dataset(ids, {0.5, 0.25, 0.25}, 1), ConfigError);
  EXPECT_NO_THROW(split_dataset(ids, {0.5, 0.25, 0.25}, 1, true));
  EXPECT_THROW(split_dataset(ids, {0.8, 0.2, 0.2}, 1, true), ConfigError);
}

TEST(Split, PartitionProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + rng.below(200);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    const SplitRatios r{rng.uniform(0.70, 0.80), rng.uniform(0.10, 0.15), 0};
    SplitRatios ratios = r;
    ratios.test = std::min(0.15, 1.0 - r.train - r.validation);
    if (ratios.test < 0.10) ratios = {0.8, 0.1, 0.1};
    const DatasetSplit s = split_dataset(ids, ratios, rng.next_u64());
    std::set<std::string> all;
    for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), n);
    EXPECT_EQ(s.validation.size(), static_cast<std::size_t>(std::floor(ratios.validation * n + 1e-9)));
  }
}

// ---- phantoms ----

TEST(Phantom, ForcedNegativeAndDeterminism) {
  PhantomSpec spec;
  spec.lesion_probability = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(generate_phantom(spec, s).label, 0);
  spec.lesion_probability = 0.5;
  const Phantom a = generate_phantom(spec, 123), b = generate_phantom(spec, 123);
  EXPECT_EQ(a.image.pixels, b.image.pixels);
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Phantom, PositiveFractionAndMaskConsistency) {
  PhantomSpec spec;
  spec.size = 32;
  spec.lesion_radius_min = 0.05;
  std::size_t positives = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Phantom p = generate_phantom(spec, derive_seed(99, Stream::kPhantom, s));
    const bool any = std::any_of(p.mask.begin(), p.mask.end(), [](auto m) { return m != 0; });
    EXPECT_EQ(p.label == 1, any);
    positives += p.label;
  }
  EXPECT_GE(positives, 440u);
  EXPECT_LE(positives, 560u);
}

TEST(Phantom, InvalidSpecIsRejected) {
  PhantomSpec spec;
  spec.liver_axis_max = 0.6;
  EXPECT_THROW(generate_phantom(spec, 1), ConfigError);
  spec = {};
  spec.lesion_radius_max = 0.3;
  EXPECT_THROW(generate_phantom(spec, 1), ConfigError);
}

// ---- datasets and preprocessing ----

TEST(Dataset, RoundTripAndErrors) {
  PreprocessOptions opts;
  opts.height = opts.width = 16;
  PhantomSpec spec;
  spec.size = 32;
  const Dataset d = phantom_dataset(spec, 6, 3, opts);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_TRUE(d.has_masks());
  const auto bytes = encode_dataset(d);
  const Dataset back = decode_dataset(bytes);
  EXPECT_EQ(encode_dataset(back), bytes);
  EXPECT_EQ(back.ids(), d.ids());
  auto trunc = bytes;
  trunc.resize(trunc.size() - 1);
  EXPECT_THROW(decode_dataset(trunc), FormatError);
  Dataset dup(1, 16, 16);
  dup.add(d[0]);
  EXPECT_THROW(dup.add(d[0]), ContractError);
  EXPECT_EQ(d.subset({"phantom-3", "phantom-1"}).ids(), (std::vector<std::string>{"phantom-3", "phantom-1"}));
  EXPECT_EQ(d.images({0, 1}).shape(), (nn::Shape{2, 1, 16, 16}));
}

TEST(Slabs, BalancedBoundsAndProjection) {
  const auto b = slab_bounds(8, 4);
  EXPECT_EQ(b, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {2, 4}, {4, 6}, {6, 8}}));
  for (std::size_t d = 1; d < 30; ++d)
    for (std::size_t n = 1; n <= d; ++n) {
      std::size_t lo = d, hi = 0, next = 0;
      for (auto [a, e] : slab_bounds(d, n)) {
        EXPECT_EQ(a, next);
        next = e;
        lo = std::min(lo, e - a);
        hi = std::max(hi, e - a);
      }
      EXPECT_EQ(next, d);
      EXPECT_LE(hi - lo, 1u);
    }
  EXPECT_THROW(slab_bounds(3, 4), ConfigError);
  Volume v{2, 1, 2, {1, 2, 3, 6}, ValueSpace::kHu, 1, 0, VolumeLabel::kPresent};
  EXPECT_EQ(mean_projection(v, 0, 2), Tensor({1, 2}, std::vector<double>{2, 4}));
}

TEST(Preprocess, ManifestVolumesToSamples) {
  const auto dir = temp_dir("manifest");
  Volume v{4, 8, 8, {}, ValueSpace::kRaw, 1.0, -1024.0, VolumeLabel::kPresent};
  Rng rng(12);
  for (int i = 0; i < 256; ++i) v.voxels.push_back(std::round(rng.uniform(900, 1200)));
  write_volume(v, dir / "a.ctv1");
  write_text(dir / "manifest.csv", "# id,path,label\na,a.ctv1,1\nb, /abs/b.ctv1 ,\n");
  const auto entries = read_manifest(dir / "manifest.csv");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].path, dir / "a.ctv1");
  EXPECT_EQ(entries[1].path, std::filesystem::path("/abs/b.ctv1"));
  EXPECT_EQ(entries[1].label, VolumeLabel::kUnlabeled);
  write_text(dir / "bad.csv", "a,a.ctv1,2\n");
  EXPECT_THROW(read_manifest(dir / "bad.csv"), ConfigError);

  PreprocessOptions opts;
  opts.height = opts.width = 4;
  const auto slices = preprocess_volume(read_volume(entries[0].path), "a", opts);
  ASSERT_EQ(slices.size(), 4u);
  EXPECT_EQ(slices[2].id, "a/2");
  EXPECT_EQ(slices[2].label, 1);
  EXPECT_EQ(slices[2].image.shape(), (nn::Shape{1, 4, 4}));
  opts.slabs = 2;
  const auto slab = preprocess_volume(v, "a", opts);
  ASSERT_EQ(slab.size(), 1u);
  EXPECT_EQ(slab[0].image.shape(), (nn::Shape{2, 4, 4}));
  std::filesystem::remove_all(dir);
}
