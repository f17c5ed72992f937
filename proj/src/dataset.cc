// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/dataset.h"

#include <cmath>
#include <fstream>
#include <set>

#include "memescope/error.h"

namespace memescope {
namespace {

using nlohmann::json;

[[noreturn]] void reject(const std::string& id, const std::string& field,
                         const std::string& why) {
  throw ValidationError("record '" + id + "': field '" + field + "' " + why);
}

double as_number(const json& j, const std::string& id, const std::string& field) {
  if (!j.is_number()) reject(id, field, "must be a number");
  return j.get<double>();
}

}  // namespace

const char* label_name(Label label) {
  return label == Label::kHateful ? "hateful" : "non-hateful";
}

std::size_t DatasetSplit::feature_dim() const {
  for (const auto& r : records) {
    if (!r.regions.empty()) return r.regions.front().feature.size();
  }
  return 0;
}

const MemeRecord& DatasetSplit::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw NotFoundError("no record with id '" + id + "'");
}

void validate_record(const MemeRecord& record) {
  const std::string& id = record.id;
  if (id.empty()) throw ValidationError("record with empty id");
  if (record.label != Label::kHateful && record.label != Label::kNonHateful) {
    reject(id, "label", "must be 0 or 1");
  }
  for (std::size_t i = 0; i < record.regions.size(); ++i) {
    const Region& region = record.regions[i];
    const std::string where = "regions[" + std::to_string(i) + "]";
    const auto& [x1, y1, x2, y2] = region.bbox;
    for (double v : region.bbox) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        reject(id, where + ".bbox", "must lie in [0, 1]");
      }
    }
    if (!(x1 < x2)) reject(id, where + ".bbox", "needs x1 < x2");
    if (!(y1 < y2)) reject(id, where + ".bbox", "needs y1 < y2");
    if (region.feature.empty()) reject(id, where + ".feat", "is empty");
    if (region.feature.size() != record.regions.front().feature.size()) {
      reject(id, where + ".feat", "dimension differs from the record's first region");
    }
    for (double v : region.feature) {
      if (!std::isfinite(v)) reject(id, where + ".feat", "contains a non-finite value");
    }
  }
}

void validate_split(const DatasetSplit& split) {
  std::set<std::string> ids;
  const std::size_t dim = split.feature_dim();
  for (const auto& r : split.records) {
    validate_record(r);
    if (!ids.insert(r.id).second) reject(r.id, "id", "is duplicated");
    if (!r.regions.empty() && r.regions.front().feature.size() != dim) {
      reject(r.id, "regions.feat",
             "has dimension " + std::to_string(r.regions.front().feature.size()) +
                 " but the split uses " + std::to_string(dim));
    }
  }
}

MemeRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  MemeRecord r;
  if (!j.contains("id") || !j["id"].is_string()) {
    throw ValidationError("record is missing string field 'id'");
  }
  r.id = j["id"].get<std::string>();
  if (!j.contains("text") || !j["text"].is_string()) reject(r.id, "text", "must be a string");
  r.text = j["text"].get<std::string>();
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    reject(r.id, "label", "must be 0 or 1");
  }
  const auto label = j["label"].get<long long>();
  if (label != 0 && label != 1) reject(r.id, "label", "must be 0 or 1");
  r.label = static_cast<Label>(label);
  if (j.contains("img") && !j["img"].is_null()) {
    if (!j["img"].is_string()) reject(r.id, "img", "must be a string");
    r.image_path = j["img"].get<std::string>();
  }
  if (j.contains("regions")) {
    const json& regions = j["regions"];
    if (!regions.is_array()) reject(r.id, "regions", "must be an array");
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const json& rj = regions[i];
      const std::string where = "regions[" + std::to_string(i) + "]";
      if (!rj.is_object()) reject(r.id, where, "must be an object");
      if (!rj.contains("bbox") || !rj["bbox"].is_array() || rj["bbox"].size() != 4) {
        reject(r.id, where + ".bbox", "must be an array of 4 numbers");
      }
      if (!rj.contains("feat") || !rj["feat"].is_array()) {
        reject(r.id, where + ".feat", "must be an array of numbers");
      }
      Region region;
      for (std::size_t k = 0; k < 4; ++k) {
        region.bbox[k] = as_number(rj["bbox"][k], r.id, where + ".bbox");
      }
      region.feature.reserve(rj["feat"].size());
      for (const json& v : rj["feat"]) region.feature.push_back(as_number(v, r.id, where + ".feat"));
      r.regions.push_back(std::move(region));
    }
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key != "id" && key != "text" && key != "label" && key != "img" && key != "regions") {
      r.extra[key] = it.value();
    }
  }
  validate_record(r);
  return r;
}

json record_to_json(const MemeRecord& record) {
  json j = record.extra.is_object() ? record.extra : json::object();
  j["id"] = record.id;
  j["text"] = record.text;
  j["label"] = static_cast<int>(record.label);
  if (record.image_path) j["img"] = *record.image_path;
  json regions = json::array();
  for (const auto& region : record.regions) {
    regions.push_back({{"bbox", region.bbox}, {"feat", region.feature}});
  }
  j["regions"] = std::move(regions);
  return j;
}

DatasetSplit load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  DatasetSplit split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      split.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed JSON: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_split(split);
  return split;
}

void save_jsonl(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  for (const auto& r : split.records) out << record_to_json(r).dump() << '\n';
}

SplitStats split_stats(const DatasetSplit& split) {
  SplitStats stats;
  for (const auto& r : split.records) {
    if (r.label == Label::kHateful) {
      ++stats.hateful;
    } else {
      ++stats.nonhateful;
    }
  }
  return stats;
}

}  // namespace memescope
