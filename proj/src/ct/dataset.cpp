#include "dsam/ct/dataset.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"

namespace dsam::ct {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

Dataset::Dataset(std::size_t channels, std::size_t height, std::size_t width)
    : channels_(channels), height_(height), width_(width) {
  if (channels == 0 || height == 0 || width == 0) throw ContractError("dataset sample dims must be positive");
}

void Dataset::add(Sample s) {
  if (s.image.shape() != sample_shape()) {
    throw ContractError("sample '" + s.id + "' has shape " + nn::shape_string(s.image.shape()) + ", dataset expects " +
                        nn::shape_string(sample_shape()));
  }
  if (!s.mask.empty() && s.mask.size() != height_ * width_) {
    throw ContractError("sample '" + s.id + "' mask has " + std::to_string(s.mask.size()) + " pixels");
  }
  if (s.label != 0 && s.label != 1 && s.label != kUnlabeled) {
    throw ContractError("sample '" + s.id + "' has label " + std::to_string(s.label));
  }
  if (s.id.empty() || s.id.size() > 0xffff) throw ContractError("sample id must be 1..65535 bytes");
  if (!id_set_.insert(s.id).second) throw ContractError("duplicate sample id '" + s.id + "'");
  samples_.push_back(std::move(s));
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(samples_.size());
  for (const Sample& s : samples_) out.push_back(s.id);
  return out;
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples_.size(); ++i) index.emplace(samples_[i].id, i);
  Dataset out(channels_, height_, width_);
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ContractError("unknown sample id '" + id + "'");
    out.add(samples_[it->second]);
  }
  return out;
}

bool Dataset::has_masks() const {
  return !samples_.empty() &&
         std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return !s.mask.empty(); });
}

nn::Tensor Dataset::images(const std::vector<std::size_t>& indices) const {
  const std::size_t per = channels_ * height_ * width_;
  nn::Tensor out({indices.size(), channels_, height_, width_});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto v = samples_.at(indices[k]).image.values();
    std::copy(v.begin(), v.end(), out.data().begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return out;
}

nn::Tensor Dataset::labels(const std::vector<std::size_t>& indices) const {
  nn::Tensor out({indices.size(), 1});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample& s = samples_.at(indices[k]);
    if (s.label == kUnlabeled) throw ContractError("sample '" + s.id + "' is unlabeled");
    out[k] = s.label;
  }
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  ByteWriter w;
  w.bytes("DSS1");
  w.u16(1);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(static_cast<std::uint32_t>(d.channels()));
  w.u32(static_cast<std::uint32_t>(d.height()));
  w.u32(static_cast<std::uint32_t>(d.width()));
  for (const Sample& s : d.samples()) {
    w.u16(static_cast<std::uint16_t>(s.id.size()));
    w.bytes(s.id);
    w.u8(s.label);
    w.u8(s.mask.empty() ? 0 : 1);
    for (double v : s.image.values()) w.f32(static_cast<float>(v));
    for (std::uint8_t m : s.mask) w.u8(m);
  }
  return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4) != "DSS1") throw FormatError("bad magic", 0);
  const std::uint16_t version = r.u16();
  if (version != 1) throw FormatError("unsupported DSS1 version " + std::to_string(version), 4);
  r.u16();
  const std::uint32_t count = r.u32();
  const std::size_t dims_at = r.offset();
  const std::uint32_t c = r.u32(), h = r.u32(), w = r.u32();
  if (c == 0 || h == 0 || w == 0) throw FormatError("zero sample dimension", dims_at);
  Dataset d(c, h, w);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    Sample s;
    s.id = r.bytes(r.u16());
    s.label = r.u8();
    const std::uint8_t has_mask = r.u8();
    if (has_mask > 1) throw FormatError("bad mask flag", r.offset() - 1);
    r.require(std::size_t{c} * h * w * 4, "sample pixels");
    s.image = nn::Tensor({c, h, w});
    for (double& v : s.image.data()) v = r.f32();
    if (has_mask) {
      r.require(std::size_t{h} * w, "sample mask");
      s.mask.resize(std::size_t{h} * w);
      for (auto& m : s.mask) m = r.u8();
    }
    try {
      d.add(std::move(s));
    } catch (const ContractError& e) {
      throw FormatError(e.what(), at);
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last sample", r.offset());
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, encode_dataset(d)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (t.back() == ',') fields.emplace_back();
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 3) throw ConfigError(where + ": expected 'id,path,label', got '" + t + "'");
    ManifestEntry e;
    e.id = fields[0];
    if (e.id.empty() || e.id.find('/') != std::string::npos) {
      throw ConfigError(where + ": id must be non-empty and must not contain '/'");
    }
    if (!seen.insert(e.id).second) throw ConfigError(where + ": duplicate id '" + e.id + "'");
    e.path = fields[1];
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
    if (fields[2] == "0") {
      e.label = VolumeLabel::kAbsent;
    } else if (fields[2] == "1") {
      e.label = VolumeLabel::kPresent;
    } else if (fields[2].empty() || fields[2] == "unlabeled") {
      e.label = VolumeLabel::kUnlabeled;
    } else {
      throw ConfigError(where + ": label must be 0, 1 or empty, got '" + fields[2] + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> slab_bounds(std::size_t depth, std::size_t n) {
  if (n == 0) throw ConfigError("slab.count must be >= 1");
  if (n > depth) {
    throw ConfigError("slab.count " + std::to_string(n) + " exceeds the volume depth " + std::to_string(depth));
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < n; ++k) out.emplace_back(k * depth / n, (k + 1) * depth / n);
  return out;
}

nn::Tensor mean_projection(const Volume& v, std::size_t begin, std::size_t end) {
  if (begin >= end || end > v.depth) throw ContractError("mean_projection: bad plane range");
  nn::Tensor out({v.height, v.width});
  for (std::size_t d = begin; d < end; ++d) out += v.plane(d);
  out *= 1.0 / static_cast<double>(end - begin);
  return out;
}

nn::Tensor preprocess_slice(const SliceImage& hu, const PreprocessOptions& opts) {
  const SliceImage w = apply_window(hu, opts.window_level, opts.window_width);
  return zscore_normalize(resize_bilinear(w, opts.height, opts.width)).pixels;
}

std::vector<Sample> preprocess_volume(const Volume& v, const std::string& id, const PreprocessOptions& opts) {
  const Volume hu = v.space == ValueSpace::kRaw ? to_hounsfield(v) : v;
  hu.validate();
  const std::uint8_t label = static_cast<std::uint8_t>(hu.label);
  std::vector<Sample> out;
  if (opts.slabs == 0) {
    for (std::size_t d = 0; d < hu.depth; ++d) {
      Sample s;
      s.id = id + "/" + std::to_string(d);
      s.image = preprocess_slice({hu.plane(d), ValueSpace::kHu, s.id}, opts).reshaped({1, opts.height, opts.width});
      s.label = label;
      out.push_back(std::move(s));
    }
    return out;
  }
  const auto bounds = slab_bounds(hu.depth, opts.slabs);
  Sample s;
  s.id = id;
  s.label = label;
  s.image = nn::Tensor({opts.slabs, opts.height, opts.width});
  const std::size_t plane = opts.height * opts.width;
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const nn::Tensor p = preprocess_slice(
        {mean_projection(hu, bounds[k].first, bounds[k].second), ValueSpace::kHu, id}, opts);
    std::copy(p.values().begin(), p.values().end(), s.image.data().begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  out.push_back(std::move(s));
  return out;
}

Dataset phantom_dataset(const PhantomSpec& spec, std::size_t count, std::uint64_t seed, const PreprocessOptions& opts) {
  Dataset d(1, opts.height, opts.width);
  for (std::size_t i = 0; i < count; ++i) {
    Phantom p = generate_phantom(spec, derive_seed(seed, Stream::kPhantom, i));
    Sample s;
    s.id = "phantom-" + std::to_string(i);
    s.image = preprocess_slice(p.image, opts).reshaped({1, opts.height, opts.width});
    s.label = p.label;
    // Nearest-neighbour mask resampling to the model resolution.
    s.mask.assign(opts.height * opts.width, 0);
    for (std::size_t y = 0; y < opts.height; ++y)
      for (std::size_t x = 0; x < opts.width; ++x) {
        const std::size_t sy = std::min(spec.size - 1, y * spec.size / opts.height);
        const std::size_t sx = std::min(spec.size - 1, x * spec.size / opts.width);
        s.mask[y * opts.width + x] = p.mask[sy * spec.size + sx];
      }
    d.add(std::move(s));
  }
  return d;
}

}  // namespace dsam::ct
