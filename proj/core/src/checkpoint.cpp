// SPDX-License-Identifier: Apache-2.0

#include "kcciol/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "kcciol/errors.hpp"

namespace kcciol::model {
namespace {

constexpr std::string_view kMagic = "KCML";

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string spec_text(const ModelSpec& spec, std::string_view config_hash) {
  std::ostringstream s;
  s << "layers=";
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
    s << (i ? "," : "") << spec.layer_sizes[i];
  }
  s << "\nsplit=" << spec.split_index << "\nactivation=" << spec.activation_tag() << "\n";
  if (!config_hash.empty()) s << "config_hash=" << config_hash << "\n";
  return s.str();
}

ModelSpec parse_spec_text(std::string_view text, std::string& config_hash) {
  ModelSpec spec;
  bool have_layers = false, have_split = false, have_activation = false;
  std::istringstream in{std::string(text)};
  std::string line;
  try {
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("checkpoint spec line without '='");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "layers") {
        std::istringstream vs(value);
        std::string item;
        while (std::getline(vs, item, ',')) spec.layer_sizes.push_back(std::stoll(item));
        have_layers = true;
      } else if (key == "split") {
        spec.split_index = std::stoi(value);
        have_split = true;
      } else if (key == "activation") {
        spec.head = head_kind_from_tag(value);
        have_activation = true;
      } else if (key == "config_hash") {
        config_hash = value;
      } else {
        throw FormatError("unknown checkpoint spec key '" + key + "'");
      }
    }
    if (!have_layers || !have_split || !have_activation) {
      throw FormatError("checkpoint spec is incomplete");
    }
    spec.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint spec is malformed: ") + e.what());
  }
  return spec;
}

}  // namespace

std::string encode_checkpoint(const ParameterStore& params, const Mask* mask,
                              std::string_view config_hash) {
  if (mask != nullptr && mask->size() != params.size()) {
    throw UsageError("mask length does not match parameter count");
  }
  std::string out;
  out.append(kMagic);
  put_le(out, kCheckpointVersion, 4);
  const std::string text = spec_text(params.spec(), config_hash);
  put_le(out, text.size(), 4);
  out.append(text);
  const auto n = static_cast<std::uint64_t>(params.size());
  put_le(out, n, 8);
  out.reserve(out.size() + 8 * n + n / 8 + 16);
  for (Index i = 0; i < params.size(); ++i) put_le(out, std::bit_cast<std::uint64_t>(params.values()[i]), 8);
  if (mask != nullptr) {
    out.push_back(static_cast<char>(kMaskTag));
    std::string packed((n + 7) / 8, '\0');
    for (Index i = 0; i < mask->size(); ++i) {
      if (mask->test(i)) packed[static_cast<std::size_t>(i / 8)] |= static_cast<char>(1u << (i % 8));
    }
    out.append(packed);
  }
  put_le(out, crc32_of(out), 4);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  constexpr std::size_t kFixedHead = 4 + 4 + 4;
  if (bytes.size() < kFixedHead + 8 + 4) throw FormatError("checkpoint truncated");
  if (bytes.substr(0, 4) != kMagic) throw FormatError("bad checkpoint magic");
  const std::size_t body = bytes.size() - 4;
  if (crc32_of(bytes.substr(0, body)) != get_le(bytes, body, 4)) {
    throw FormatError("checkpoint CRC-32 mismatch");
  }
  const auto version = get_le(bytes, 4, 4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text_len = get_le(bytes, 8, 4);
  if (kFixedHead + text_len + 8 > body) throw FormatError("checkpoint truncated in spec section");

  Checkpoint cp;
  ModelSpec spec = parse_spec_text(bytes.substr(kFixedHead, text_len), cp.config_hash);
  std::size_t at = kFixedHead + text_len;
  const std::uint64_t n = get_le(bytes, at, 8);
  at += 8;
  if (n != static_cast<std::uint64_t>(parameter_count(spec))) {
    throw FormatError("checkpoint parameter count disagrees with its spec");
  }
  if (n > (body - at) / 8) throw FormatError("checkpoint truncated in parameter section");
  Vector values(static_cast<Index>(n));
  for (std::uint64_t i = 0; i < n; ++i, at += 8) {
    values[static_cast<Index>(i)] = std::bit_cast<double>(get_le(bytes, at, 8));
  }
  cp.params = ParameterStore(std::move(spec), std::move(values));

  if (at != body) {
    const std::size_t packed = static_cast<std::size_t>((n + 7) / 8);
    if (static_cast<std::uint8_t>(bytes[at]) != kMaskTag || body - at != 1 + packed) {
      throw FormatError("unrecognized trailing checkpoint section");
    }
    ++at;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
      bits[i] = (static_cast<unsigned char>(bytes[at + i / 8]) >> (i % 8)) & 1u;
    }
    if (n % 8 != 0 && (static_cast<unsigned char>(bytes[at + packed - 1]) >> (n % 8)) != 0) {
      throw FormatError("nonzero mask padding bits");
    }
    Mask m(std::move(bits), 0.0);
    const double fraction = n == 0 ? 0.0 : static_cast<double>(m.count()) / static_cast<double>(n);
    cp.mask = Mask(m.bits(), fraction);
  }
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const Mask* mask, std::string_view config_hash) {
  const std::string bytes = encode_checkpoint(params, mask, config_hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace kcciol::model
