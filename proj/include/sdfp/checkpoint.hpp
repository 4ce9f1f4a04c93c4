#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sdfp/transformer.hpp"

namespace sdfp {

// Binary checkpoint, little-endian throughout:
//   offset 0   magic "SDFP"
//   offset 4   u32 version (= 1)
//   offset 8   u32 x 7: vocab_size, d_model, n_heads, n_layers, d_ff,
//              max_context, rng_seed
//   offset 36  active mask, ceil(2 L / 8) bytes; bit 2l = attention of layer
//              l, bit 2l+1 = FFN of layer l, LSB-first within each byte
//   then       every parameter in ParamLayout order as f32
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 36;

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model);

// Throws FormatError carrying the byte offset of the first problem.
template <class T>
Model<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace sdfp
