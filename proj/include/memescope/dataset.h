// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MEMESCOPE_DATASET_H_
#define MEMESCOPE_DATASET_H_

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace memescope {

enum class Label : int { kNonHateful = 0, kHateful = 1 };

const char* label_name(Label label);

// Normalized [x1, y1, x2, y2] with 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
using BoundingBox = std::array<double, 4>;

struct Region {
  BoundingBox bbox{};
  std::vector<double> feature;
};

struct MemeRecord {
  std::string id;
  std::string text;
  Label label = Label::kNonHateful;
  std::vector<Region> regions;
  std::optional<std::string> image_path;
  // Unrecognized top-level JSON fields, written back verbatim on save.
  nlohmann::json extra = nlohmann::json::object();
};

struct DatasetSplit {
  std::vector<MemeRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  // Shared region feature dimension, or 0 when no record has regions.
  std::size_t feature_dim() const;
  // Throws NotFoundError.
  const MemeRecord& find(const std::string& id) const;
};

struct SplitStats {
  std::size_t hateful = 0;
  std::size_t nonhateful = 0;
};

// Throws ValidationError naming the record id and the offending field.
void validate_record(const MemeRecord& record);
// Per-record checks plus one shared feature dimension and unique ids.
void validate_split(const DatasetSplit& split);

MemeRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const MemeRecord& record);

// Malformed lines raise ValidationError carrying the 1-based line number.
DatasetSplit load_jsonl(const std::filesystem::path& path);
void save_jsonl(const DatasetSplit& split, const std::filesystem::path& path);

SplitStats split_stats(const DatasetSplit& split);

}  // namespace memescope

#endif  // MEMESCOPE_DATASET_H_
