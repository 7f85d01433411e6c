#pragma once

// Binary checkpoint, all integers little-endian:
//
//   magic        8 bytes  "ADENETCK"
//   version      u32      currently 1
//   name         u32 length + UTF-8 bytes
//   in_channels  u32
//   classes      u32
//   fixed_input  u32      0 = variable-size input
//   seed         u64
//   mode         u8       0 = train, 1 = infer
//   layer_count  u32
//   per layer:   u8 type, u32 in, u32 out, u32 tensor_count,
//                tensor_count x (4 x u32 dims)
//   payload      f32 LE values of every tensor in table order
//                (weight, bias, running_mean, running_var)
//   checksum     u32 CRC-32 (zlib polynomial) of all preceding bytes
//
// Only weights and running statistics are stored; no optimizer state.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adenet/model.hpp"

namespace adenet::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace adenet::model
