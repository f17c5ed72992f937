// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file layout (all integers little-endian):
//
//   "MMXP"                       4-byte magic
//   u32 version                  currently 1
//   u32 header_len, header       UTF-8 JSON: {"config", "vocab", "training"}
//   u32 param_count
//   param_count x {
//     u32 name_len, name         UTF-8
//     u32 rank, rank x u64 dim
//     prod(dims) x f64           IEEE-754 binary64, row-major
//   }
//
// Loading rejects trailing bytes, missing or unexpected parameters, and any
// shape that disagrees with the stored config.

#ifndef MEMESCOPE_CHECKPOINT_H_
#define MEMESCOPE_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "memescope/model.h"

namespace memescope {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelCheckpoint& checkpoint);
// Throws LoadError.
ModelCheckpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a of the serialized bytes, as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string checkpoint_hash(const ModelCheckpoint& checkpoint);

}  // namespace memescope

#endif  // MEMESCOPE_CHECKPOINT_H_
