#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advfl/network.hpp"

namespace advfl {

// Flat model file, all integers and floats little-endian:
//
//   magic      8 bytes  "ADVFLNN\0"
//   version    u32
//   input      3 x u64  (channels, height, width)
//   n_layers   u32
//   layers     n_layers descriptors of kDescriptorBytes each
//   n_params   u64, then n_params f64
//   n_buffers  u64, then n_buffers f64
//
// A descriptor is: tag u32, 4 x i64 geometry, u8 batchnorm flag,
// 2 x f64 BN (momentum, eps), activation kind u32, 6 x f64 activation params.

inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::size_t kDescriptorBytes = 4 + 4 * 8 + 1 + 2 * 8 + 4 + 6 * 8;

std::vector<std::uint8_t> encode_model(const Network& net);
Network decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

}  // namespace advfl
