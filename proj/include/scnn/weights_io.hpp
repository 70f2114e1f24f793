#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scnn/model.hpp"

namespace scnn {

// Weight file layout (all integers little-endian):
//
//   "SCNNWGT\0"                        8-byte magic
//   u32 version                        kWeightFormatVersion
//   u32 rank, u32 dims[rank]           network input shape
//   u32 layer_count, then per layer:   u8 kind, u8 activation, u32 filters,
//                                      u32 kernel, u32 units, f64 rate
//   u32 tensor_count, then per tensor: u16 name_len, name bytes, u8 kind,
//                                      u8 role, u32 layer, u8 trainable,
//                                      u8 rank, u32 dims[rank]
//   f32 values of every tensor, in manifest order
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> encode_weights(const ArchitectureSpec& spec, const WeightStore& weights);
Model decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const ArchitectureSpec& spec, const WeightStore& weights,
                  const std::filesystem::path& path);
void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path);
/// Loads and checks the stored tensors against `expected`; a mismatch raises
/// ShapeError naming the offending tensor.
Model load_weights(const std::filesystem::path& path, const ArchitectureSpec& expected);

}  // namespace scnn
