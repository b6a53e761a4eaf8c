#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cadx/network.hpp"

namespace cadx::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "CADX" | u32 version | u32 input_size | u32 n_conv | u32 channels[n_conv]
///   | u32 fc1 | u32 fc2 | u32 out_dim | u32 n_mask | u8 mask[n_mask]
///   | f32 parameters, tensor by tensor in topology order.
std::string encode_checkpoint(const CnnModel<float>& model);
CnnModel<float> decode_checkpoint(std::string_view bytes);

/// Writes `path` and a sidecar `path` + ".json" with the config and seed.
void save_checkpoint(const CnnModel<float>& model, std::uint64_t training_seed, const std::filesystem::path& path);
CnnModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace cadx::nn
