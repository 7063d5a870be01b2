// SPDX-License-Identifier: Apache-2.0
#include "owlfed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "owlfed/errors.hpp"

namespace owlfed {

namespace le {

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::vector<std::byte>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t offset) {
  if (offset + 8 > in.size()) throw FormatError("truncated input at byte " + std::to_string(offset));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  return v;
}

double get_f64(std::span<const std::byte> in, std::size_t offset) {
  return std::bit_cast<double>(get_u64(in, offset));
}

}  // namespace le

namespace {
constexpr char kMagic[4] = {'O', 'W', 'L', 'M'};
}

std::vector<std::byte> encode_checkpoint(const ModelParams& params) {
  std::vector<std::byte> out;
  const std::size_t count = params.parameter_count();
  out.reserve(kCheckpointHeaderBytes + 8 * count);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(kCheckpointVersion));
  out.insert(out.end(), 3, std::byte{0});
  const auto& c = params.config;
  for (std::uint64_t v : {std::uint64_t(c.layers), std::uint64_t(c.width), std::uint64_t(c.heads),
                          std::uint64_t(c.ffn_width), std::uint64_t(c.features),
                          std::uint64_t(c.window), std::uint64_t(c.classes), c.seed,
                          std::uint64_t(count)})
    le::put_u64(out, v);
  for (const Tensor2* t : params.tensors())
    for (double v : t->values()) le::put_f64(out, v);
  return out;
}

ModelParams decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < kCheckpointHeaderBytes) throw FormatError("checkpoint: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = std::to_integer<std::uint8_t>(bytes[4]);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig c;
  c.layers = le::get_u64(bytes, 8);
  c.width = le::get_u64(bytes, 16);
  c.heads = le::get_u64(bytes, 24);
  c.ffn_width = le::get_u64(bytes, 32);
  c.features = le::get_u64(bytes, 40);
  c.window = le::get_u64(bytes, 48);
  c.classes = le::get_u64(bytes, 56);
  c.seed = le::get_u64(bytes, 64);
  const std::uint64_t count = le::get_u64(bytes, 72);
  ModelParams params;
  try {
    params = ModelParams::zeros(c);
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  if (count != params.parameter_count()) {
    throw FormatError("checkpoint: header declares " + std::to_string(count) +
                      " parameters, config implies " + std::to_string(params.parameter_count()));
  }
  if (bytes.size() != kCheckpointHeaderBytes + 8 * count) {
    throw FormatError("checkpoint: payload is " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(kCheckpointHeaderBytes + 8 * count));
  }
  std::size_t offset = kCheckpointHeaderBytes;
  for (Tensor2* t : params.tensors())
    for (double& v : t->values()) {
      v = le::get_f64(bytes, offset);
      offset += 8;
    }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return decode_checkpoint(bytes);
}

}  // namespace owlfed
