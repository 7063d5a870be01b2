// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "owlfed/model.hpp"

namespace owlfed {

/// Binary model checkpoint, all integers and floats little-endian:
///
///   offset  size  field
///   0       4     magic "OWLM"
///   4       1     format version (1)
///   5       3     reserved, zero
///   8       8     layers        (u64)
///   16      8     width         (u64)
///   24      8     heads         (u64)
///   32      8     ffn_width     (u64)
///   40      8     features d    (u64)
///   48      8     window k      (u64)
///   56      8     classes C     (u64)
///   64      8     init seed     (u64)
///   72      8     parameter count P (u64)
///   80      8*P   parameters (f64), canonical ModelParams::tensors() order
inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 80;

std::vector<std::byte> encode_checkpoint(const ModelParams& params);
/// Throws FormatError on bad magic, version, size or config.
ModelParams decode_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

namespace le {

void put_u64(std::vector<std::byte>& out, std::uint64_t v);
void put_f64(std::vector<std::byte>& out, double v);
std::uint64_t get_u64(std::span<const std::byte> in, std::size_t offset);
double get_f64(std::span<const std::byte> in, std::size_t offset);

}  // namespace le

}  // namespace owlfed
