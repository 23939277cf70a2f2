// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint layout (all integers little-endian):
//
//   "KCML"                     4 bytes magic
//   version                    u32 (currently 1)
//   spec text length           u32
//   spec text                  UTF-8 "key=value\n" lines: layers, split,
//                              activation, optionally config_hash
//   parameter count            u64
//   parameters                 count x IEEE-754 binary64
//   [mask section]             tag byte 0x4D, then ceil(count / 8) bytes,
//                              bit i stored in byte i / 8 at position i % 8
//                              (LSB first), unused trailing bits zero
//   CRC-32                     u32 over every preceding byte

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "kcciol/mask.hpp"
#include "kcciol/model.hpp"

namespace kcciol::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kMaskTag = 0x4D;

struct Checkpoint {
  ParameterStore params;
  std::optional<Mask> mask;
  std::string config_hash;
};

std::string encode_checkpoint(const ParameterStore& params, const Mask* mask,
                              std::string_view config_hash = {});
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const Mask* mask, std::string_view config_hash = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kcciol::model
