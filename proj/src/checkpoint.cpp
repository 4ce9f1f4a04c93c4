#include "sdfp/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "sdfp/io_util.hpp"

namespace sdfp {
namespace {

constexpr char kMagic[4] = {'S', 'D', 'F', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[offset + i]} << (8 * i);
  return v;
}

// Offsets of the config fields, in ModelConfig declaration order.
std::size_t config_field_offset(const std::string& field) {
  static const char* kFields[] = {"vocab_size", "d_model",     "n_heads", "n_layers",
                                  "d_ff",       "max_context", "rng_seed"};
  for (std::size_t i = 0; i < 7; ++i)
    if (field == kFields[i]) return 8 + 4 * i;
  return 8;
}

}  // namespace

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model) {
  const auto& c = model.config();
  std::vector<std::uint8_t> out;
  out.reserve(kCheckpointHeaderBytes + 4 * model.weights().layout().total_elements());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  for (std::uint32_t v : {c.vocab_size, c.d_model, c.n_heads, c.n_layers, c.d_ff,
                          c.max_context, c.rng_seed})
    put_u32(out, v);
  const auto mask = model.mask().packed();
  out.insert(out.end(), mask.begin(), mask.end());
  for (const auto& p : model.weights().params()) {
    for (T v : p.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

template <class T>
Model<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(0, "bad magic, not an SDFP checkpoint");
  }
  if (bytes.size() < kCheckpointHeaderBytes) {
    throw FormatError(bytes.size(), "truncated header");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(4, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.vocab_size = get_u32(bytes, 8);
  c.d_model = get_u32(bytes, 12);
  c.n_heads = get_u32(bytes, 16);
  c.n_layers = get_u32(bytes, 20);
  c.d_ff = get_u32(bytes, 24);
  c.max_context = get_u32(bytes, 28);
  c.rng_seed = get_u32(bytes, 32);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(config_field_offset(e.field()), std::string("invalid config: ") + e.what());
  }
  const std::size_t mask_bytes = (2 * std::size_t{c.n_layers} + 7) / 8;
  {
    // Guard against header values whose parameter count overflows size_t.
    const double d = c.d_model, f = c.d_ff, layers = c.n_layers;
    const double approx = 4.0 * (d * (c.vocab_size + c.max_context + 2.0) +
                                 layers * (4.0 * d * d + 2.0 * d * f + 9.0 * d + f));
    if (approx > double(bytes.size())) {
      throw FormatError(bytes.size(), "truncated checkpoint for the configured shape");
    }
  }
  ParamLayout layout(c);
  const std::size_t payload_start = kCheckpointHeaderBytes + mask_bytes;
  const std::size_t expected = payload_start + 4 * layout.total_elements();
  if (bytes.size() < expected) {
    throw FormatError(bytes.size(), "truncated checkpoint, expected " +
                                        std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw FormatError(expected, "trailing bytes after parameters");
  }
  // Mask bits beyond 2 L must be zero.
  const auto mask_span = bytes.subspan(kCheckpointHeaderBytes, mask_bytes);
  const std::size_t used_bits = 2 * std::size_t{c.n_layers};
  if (used_bits % 8 != 0 && (mask_span.back() >> (used_bits % 8)) != 0) {
    throw FormatError(kCheckpointHeaderBytes + mask_bytes - 1, "stray bits in active mask");
  }
  ActiveMask mask = ActiveMask::from_packed(mask_span, c.n_layers);

  std::vector<Tensor<T>> params;
  params.reserve(layout.count());
  std::size_t offset = payload_start;
  for (ParamId id = 0; id < layout.count(); ++id) {
    const Shape shape = layout.shape(id);
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) {
      const float f = std::bit_cast<float>(get_u32(bytes, offset));
      if (!std::isfinite(f)) {
        throw FormatError(offset, "non-finite value in " + layout.name(id));
      }
      v = static_cast<T>(f);
      offset += 4;
    }
    params.emplace_back(shape, std::move(data));
  }
  return Model<T>(std::make_shared<const Weights<T>>(c, std::move(params)), std::move(mask));
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_checkpoint<T>(bytes);
}

template std::vector<std::uint8_t> encode_checkpoint<float>(const Model<float>&);
template std::vector<std::uint8_t> encode_checkpoint<double>(const Model<double>&);
template Model<float> decode_checkpoint<float>(std::span<const std::uint8_t>);
template Model<double> decode_checkpoint<double>(std::span<const std::uint8_t>);
template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace sdfp
