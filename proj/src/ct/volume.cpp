#include "dsam/ct/volume.hpp"

#include <cmath>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"

namespace dsam::ct {

const char* space_name(ValueSpace s) {
  switch (s) {
    case ValueSpace::kRaw: return "raw";
    case ValueSpace::kHu: return "hu";
    case ValueSpace::kWindowed: return "windowed";
    case ValueSpace::kZscored: return "zscored";
  }
  return "?";
}

void Volume::validate() const {
  if (depth == 0 || height == 0 || width == 0) {
    throw ContractError("volume dims must be positive, got " + std::to_string(depth) + "x" + std::to_string(height) +
                        "x" + std::to_string(width));
  }
  if (voxels.size() != depth * height * width) {
    throw ContractError("volume has " + std::to_string(voxels.size()) + " voxels, dims imply " +
                        std::to_string(depth * height * width));
  }
  if (slope == 0.0) throw ContractError("volume rescale slope must be non-zero");
}

nn::Tensor Volume::plane(std::size_t d) const {
  if (d >= depth) throw ContractError("plane " + std::to_string(d) + " out of range for depth " + std::to_string(depth));
  const std::size_t n = height * width;
  return nn::Tensor({height, width}, std::vector<double>(voxels.begin() + static_cast<std::ptrdiff_t>(d * n),
                                                         voxels.begin() + static_cast<std::ptrdiff_t>((d + 1) * n)));
}

std::vector<std::uint8_t> encode_volume(const Volume& v) {
  v.validate();
  if (v.space != ValueSpace::kRaw && v.space != ValueSpace::kHu) {
    throw ContractError(std::string("CTV1 stores raw or HU volumes, not ") + space_name(v.space));
  }
  ByteWriter w;
  w.bytes("CTV1");
  w.u16(kCtv1Version);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(v.depth));
  w.u32(static_cast<std::uint32_t>(v.height));
  w.u32(static_cast<std::uint32_t>(v.width));
  w.u8(static_cast<std::uint8_t>(v.space));
  w.u8(static_cast<std::uint8_t>(v.label));
  w.f32(static_cast<float>(v.slope));
  w.f32(static_cast<float>(v.intercept));
  w.zeros(kCtv1HeaderSize - 30);
  if (v.space == ValueSpace::kRaw) {
    for (double x : v.voxels) {
      if (x != std::floor(x) || x < -32768.0 || x > 32767.0) {
        throw ContractError("raw voxel " + std::to_string(x) + " is not representable as int16");
      }
      w.i16(static_cast<std::int16_t>(x));
    }
  } else {
    for (double x : v.voxels) w.f32(static_cast<float>(x));
  }
  return w.take();
}

Volume decode_volume(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4) != "CTV1") throw FormatError("bad magic", 0);
  r.require(kCtv1HeaderSize - 4, "CTV1 header");
  const std::uint16_t version = r.u16();
  if (version != kCtv1Version) throw FormatError("unsupported CTV1 version " + std::to_string(version), 4);
  if (r.u16() != 0) throw FormatError("reserved field is not zero", 6);
  Volume v;
  v.depth = r.u32();
  v.height = r.u32();
  v.width = r.u32();
  if (v.depth == 0 || v.height == 0 || v.width == 0) throw FormatError("zero volume dimension", 8);
  const std::uint8_t space = r.u8();
  if (space > 1) throw FormatError("unknown value-space code " + std::to_string(space), 20);
  v.space = static_cast<ValueSpace>(space);
  const std::uint8_t label = r.u8();
  if (label != 0 && label != 1 && label != 255) throw FormatError("unknown label code " + std::to_string(label), 21);
  v.label = static_cast<VolumeLabel>(label);
  v.slope = r.f32();
  if (v.slope == 0.0 || !std::isfinite(v.slope)) throw FormatError("rescale slope must be finite and non-zero", 22);
  v.intercept = r.f32();
  for (std::size_t i = 30; i < kCtv1HeaderSize; ++i) {
    if (r.u8() != 0) throw FormatError("header padding is not zero", i);
  }
  const std::size_t count = v.depth * v.height * v.width;
  const std::size_t elem = v.space == ValueSpace::kRaw ? 2 : 4;
  const std::size_t expected = count * elem;
  if (r.remaining() < expected) {
    throw FormatError("truncated payload: dims need " + std::to_string(expected) + " bytes, found " +
                          std::to_string(r.remaining()),
                      kCtv1HeaderSize);
  }
  if (r.remaining() > expected) {
    throw FormatError("dim/payload mismatch: " + std::to_string(r.remaining() - expected) +
                          " bytes beyond the declared voxels",
                      kCtv1HeaderSize + expected);
  }
  v.voxels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) v.voxels.push_back(elem == 2 ? r.i16() : r.f32());
  return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) { write_file(path, encode_volume(v)); }

Volume read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

Volume to_hounsfield(const Volume& v) {
  if (v.space != ValueSpace::kRaw) {
    throw StateError(std::string("to_hounsfield expects a raw volume, got ") + space_name(v.space));
  }
  v.validate();
  Volume out = v;
  out.space = ValueSpace::kHu;
  for (double& x : out.voxels) x = x * v.slope + v.intercept;
  return out;
}

}  // namespace dsam::ct
