#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dsam/nn/network.hpp"

// DSNN checkpoint layout (little-endian):
//   "DSNN" | u16 version (=1) | u32 descriptor length | descriptor bytes
//   | u32 tensor count | per tensor: u8 role, u32 rank, u32 dims[rank], f32 values
// Tensors follow Network::parameters() order (trainable parameters and
// batchnorm running statistics, layer by layer).
namespace dsam::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointTensor {
  ParamRole role = ParamRole::kKernel;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::string descriptor;
  std::vector<CheckpointTensor> tensors;
};

Checkpoint capture_checkpoint(Network& net);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Copies checkpoint tensors into `net`, checking count, roles and shapes.
void apply_checkpoint(Network& net, const Checkpoint& ckpt);

void save_checkpoint(Network& net, const std::filesystem::path& path);

using NetworkBuilder = std::function<Network(const std::string& descriptor)>;
/// Rebuilds the network from the stored descriptor, then loads its tensors.
Network load_checkpoint(const std::filesystem::path& path, const NetworkBuilder& build);

}  // namespace dsam::nn
