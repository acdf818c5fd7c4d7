#include "dsam/nn/checkpoint.hpp"

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"

namespace dsam::nn {

Checkpoint capture_checkpoint(Network& net) {
  Checkpoint c;
  c.descriptor = net.descriptor();
  for (Parameter* p : net.parameters()) {
    CheckpointTensor t{p->role, p->value.shape(), {}};
    t.values.reserve(p->value.size());
    for (double v : p->value.values()) t.values.push_back(static_cast<float>(v));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes("DSNN");
  w.u16(ckpt.version);
  w.u32(static_cast<std::uint32_t>(ckpt.descriptor.size()));
  w.bytes(ckpt.descriptor);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const CheckpointTensor& t : ckpt.tensors) {
    w.u8(static_cast<std::uint8_t>(t.role));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4) != "DSNN") throw FormatError("bad magic", 0);
  Checkpoint c;
  const std::size_t version_at = r.offset();
  c.version = r.u16();
  if (c.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(c.version), version_at);
  }
  const std::uint32_t dlen = r.u32();
  c.descriptor = r.bytes(dlen);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    CheckpointTensor t;
    const std::uint8_t role = r.u8();
    if (role > static_cast<std::uint8_t>(ParamRole::kBuffer)) {
      throw FormatError("unknown tensor role " + std::to_string(role), at);
    }
    t.role = static_cast<ParamRole>(role);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), at + 1);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::size_t dim_at = r.offset();
      const std::uint32_t d = r.u32();
      if (d == 0) throw FormatError("zero tensor dimension", dim_at);
      t.shape.push_back(d);
      n *= d;
    }
    r.require(n * 4, "tensor values");
    t.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) t.values.push_back(r.f32());
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor", r.offset());
  return c;
}

void apply_checkpoint(Network& net, const Checkpoint& ckpt) {
  auto params = net.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, network expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CheckpointTensor& t = ckpt.tensors[i];
    Parameter& p = *params[i];
    if (t.role != p.role || t.shape != p.value.shape()) {
      throw ConfigError("checkpoint tensor " + std::to_string(i) + " (" + role_name(t.role) + " " +
                        shape_string(t.shape) + ") does not match " + p.name + " (" + role_name(p.role) + " " +
                        shape_string(p.value.shape()) + ")");
    }
    for (std::size_t k = 0; k < t.values.size(); ++k) p.value[k] = static_cast<double>(t.values[k]);
  }
}

void save_checkpoint(Network& net, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(capture_checkpoint(net)));
}

Network load_checkpoint(const std::filesystem::path& path, const NetworkBuilder& build) {
  const Checkpoint c = decode_checkpoint(read_file(path));
  Network net = build(c.descriptor);
  apply_checkpoint(net, c);
  return net;
}

}  // namespace dsam::nn
