// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "memescope/error.h"

namespace memescope {
namespace {

using nlohmann::json;

// Records to emit for one split: label plus which planted signals to carry.
struct Plan {
  Label label;
  bool keyword;
  bool prototype;
};

std::vector<Plan> plan_split(const SyntheticSpec& spec, std::size_t per_class,
                             std::mt19937_64& rng) {
  std::vector<Plan> plans;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < per_class; ++i) {
    switch (spec.rule) {
      case LabelRule::kTextOnly:
        plans.push_back({Label::kHateful, true, coin(rng)});
        plans.push_back({Label::kNonHateful, false, coin(rng)});
        break;
      case LabelRule::kVisualOnly:
        plans.push_back({Label::kHateful, coin(rng), true});
        plans.push_back({Label::kNonHateful, coin(rng), false});
        break;
      case LabelRule::kConjunction:
        plans.push_back({Label::kHateful, true, true});
        // Negatives rotate through keyword-only, prototype-only, neither.
        plans.push_back({Label::kNonHateful, i % 3 == 0, i % 3 == 1});
        break;
    }
  }
  std::shuffle(plans.begin(), plans.end(), rng);
  return plans;
}

std::vector<std::vector<double>> make_prototypes(const SyntheticSpec& spec,
                                                 std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> protos;
  while (protos.size() < spec.num_prototypes) {
    std::vector<double> v(spec.feature_dim);
    for (double& x : v) x = normal(rng);
    for (const auto& p : protos) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * p[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * p[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    protos.push_back(std::move(v));
  }
  return protos;
}

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> origin(0.0, 0.75);
  std::uniform_real_distribution<double> extent(0.1, 0.25);
  BoundingBox box;
  box[0] = origin(rng);
  box[1] = origin(rng);
  box[2] = std::min(1.0, box[0] + extent(rng));
  box[3] = std::min(1.0, box[1] + extent(rng));
  return box;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

const char* rule_name(LabelRule rule) {
  switch (rule) {
    case LabelRule::kTextOnly: return "text-only";
    case LabelRule::kVisualOnly: return "visual-only";
    case LabelRule::kConjunction: return "conjunction";
  }
  return "unknown";
}

LabelRule parse_rule(const std::string& name) {
  if (name == "text-only") return LabelRule::kTextOnly;
  if (name == "visual-only") return LabelRule::kVisualOnly;
  if (name == "conjunction") return LabelRule::kConjunction;
  throw ValidationError("unknown label rule '" + name +
                        "' (expected text-only, visual-only or conjunction)");
}

std::vector<std::string> default_distractors() {
  return {"the",     "a",      "when",   "you",    "my",      "friend",  "says",
          "look",    "at",     "this",   "car",    "truck",   "dog",     "cat",
          "day",     "night",  "funny",  "happy",  "new",     "old",     "people",
          "work",    "home",   "house",  "city",   "summer",  "beach",   "party",
          "coffee",  "morning", "game",  "team",   "music",   "movie",   "phone",
          "weekend", "school", "kitchen", "garden", "mountain"};
}

void SyntheticSpec::validate() const {
  if (keywords.empty()) throw ValidationError("synthetic spec needs at least one keyword");
  if (!(noise >= 0.0 && noise < 0.5)) {
    throw ValidationError("synthetic noise must lie in [0, 0.5), got " + std::to_string(noise));
  }
  if (num_prototypes < 2) throw ValidationError("synthetic spec needs num_prototypes >= 2");
  if (num_prototypes > feature_dim) {
    throw ValidationError("num_prototypes exceeds feature_dim; prototypes must be orthogonal");
  }
  if (regions_per_record == 0) throw ValidationError("regions_per_record must be >= 1");
  if (min_words == 0 || min_words > max_words) {
    throw ValidationError("need 1 <= min_words <= max_words");
  }
  if (train_per_class == 0 || test_per_class == 0) {
    throw ValidationError("per-class record counts must be >= 1");
  }
  if (!(decoy_rate >= 0.0 && decoy_rate <= 1.0)) {
    throw ValidationError("decoy_rate must lie in [0, 1]");
  }
  std::set<std::string> seen;
  for (const auto& k : keywords) {
    if (pre_tokenize(k) != std::vector<std::string>{k}) {
      throw ValidationError("keyword '" + k + "' must be a single lowercase word");
    }
    if (!seen.insert(k).second) throw ValidationError("duplicate keyword '" + k + "'");
  }
  for (const auto& [word, pieces] : keyword_pieces) {
    std::string joined;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const bool cont = pieces[i].rfind("##", 0) == 0;
      if (cont != (i > 0)) {
        throw ValidationError("pieces of '" + word +
                              "': only continuation pieces may start with ##");
      }
      joined += cont ? pieces[i].substr(2) : pieces[i];
    }
    if (joined != word) {
      throw ValidationError("pieces of '" + word + "' do not spell the word");
    }
  }
  for (const auto& d : (distractors.empty() ? default_distractors() : distractors)) {
    if (pre_tokenize(d) != std::vector<std::string>{d}) {
      throw ValidationError("distractor '" + d + "' must be a single lowercase word");
    }
    if (seen.count(d)) throw ValidationError("distractor '" + d + "' is also a keyword");
  }
}

json SyntheticSpec::to_json() const {
  return {{"seed", seed},
          {"rule", rule_name(rule)},
          {"keywords", keywords},
          {"keyword_pieces", keyword_pieces},
          {"distractors", distractors},
          {"feature_dim", feature_dim},
          {"num_prototypes", num_prototypes},
          {"noise", noise},
          {"regions_per_record", regions_per_record},
          {"min_words", min_words},
          {"max_words", max_words},
          {"decoy_rate", decoy_rate},
          {"train_per_class", train_per_class},
          {"test_per_class", test_per_class}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("rule")) s.rule = parse_rule(j["rule"].get<std::string>());
    s.keywords = j.value("keywords", s.keywords);
    s.keyword_pieces = j.value("keyword_pieces", s.keyword_pieces);
    s.distractors = j.value("distractors", s.distractors);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.num_prototypes = j.value("num_prototypes", s.num_prototypes);
    s.noise = j.value("noise", s.noise);
    s.regions_per_record = j.value("regions_per_record", s.regions_per_record);
    s.min_words = j.value("min_words", s.min_words);
    s.max_words = j.value("max_words", s.max_words);
    s.decoy_rate = j.value("decoy_rate", s.decoy_rate);
    s.train_per_class = j.value("train_per_class", s.train_per_class);
    s.test_per_class = j.value("test_per_class", s.test_per_class);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

Label rule_label(LabelRule rule, bool has_keyword, bool has_prototype) {
  bool hateful = false;
  switch (rule) {
    case LabelRule::kTextOnly: hateful = has_keyword; break;
    case LabelRule::kVisualOnly: hateful = has_prototype; break;
    case LabelRule::kConjunction: hateful = has_keyword && has_prototype; break;
  }
  return hateful ? Label::kHateful : Label::kNonHateful;
}

bool text_has_word(const std::string& text, const std::string& keyword) {
  const auto words = pre_tokenize(text);
  return std::find(words.begin(), words.end(), keyword) != words.end();
}

SyntheticDataset synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::vector<std::string> pool =
      spec.distractors.empty() ? default_distractors() : spec.distractors;

  SyntheticDataset out;
  std::vector<std::string> vocab_tokens = pool;
  for (const auto& k : spec.keywords) {
    auto it = spec.keyword_pieces.find(k);
    if (it == spec.keyword_pieces.end()) {
      vocab_tokens.push_back(k);
    } else {
      vocab_tokens.insert(vocab_tokens.end(), it->second.begin(), it->second.end());
    }
  }
  out.vocab = WordPieceVocab::from_tokens(vocab_tokens);
  for (const auto& k : spec.keywords) {
    for (std::size_t id : wordpiece(k, out.vocab)) {
      if (id == WordPieceVocab::kUnk) {
        throw ValidationError("keyword '" + k + "' does not tokenize with the generated vocabulary");
      }
    }
  }
  out.prototypes = make_prototypes(spec, rng);

  const std::string& planted = spec.keywords.front();
  std::normal_distribution<double> normal(0.0, 1.0);
  // Per-coordinate scale so the expected noise norm is about spec.noise.
  const double coord_noise = spec.noise / std::sqrt(static_cast<double>(spec.feature_dim));
  std::uniform_int_distribution<std::size_t> pick_word(0, pool.size() - 1);
  std::uniform_int_distribution<std::size_t> word_count(spec.min_words, spec.max_words);
  std::uniform_int_distribution<std::size_t> pick_distractor_proto(1, spec.num_prototypes - 1);
  std::uniform_int_distribution<std::size_t> pick_region(0, spec.regions_per_record - 1);
  std::bernoulli_distribution decoy(spec.decoy_rate);

  auto make_split = [&](const std::string& prefix, std::size_t per_class, DatasetSplit& split) {
    const std::vector<Plan> plans = plan_split(spec, per_class, rng);
    for (std::size_t i = 0; i < plans.size(); ++i) {
      const Plan& plan = plans[i];
      char id_buf[32];
      std::snprintf(id_buf, sizeof(id_buf), "%s-%04zu", prefix.c_str(), i);

      std::vector<std::string> words(word_count(rng));
      for (auto& w : words) w = pool[pick_word(rng)];
      if (spec.keywords.size() > 1 && decoy(rng)) {
        std::uniform_int_distribution<std::size_t> pick_decoy(1, spec.keywords.size() - 1);
        std::uniform_int_distribution<std::size_t> at(0, words.size());
        const std::string& d = spec.keywords[pick_decoy(rng)];
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at(rng)), d);
      }
      if (plan.keyword) {
        std::uniform_int_distribution<std::size_t> at(0, words.size());
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at(rng)), planted);
      }

      MemeRecord record;
      record.id = id_buf;
      record.text = join_words(words);
      record.label = plan.label;
      for (std::size_t r = 0; r < spec.regions_per_record; ++r) {
        Region region;
        region.bbox = random_box(rng);
        const auto& proto = out.prototypes[pick_distractor_proto(rng)];
        region.feature.resize(spec.feature_dim);
        for (std::size_t d = 0; d < spec.feature_dim; ++d) {
          region.feature[d] = proto[d] + coord_noise * normal(rng);
        }
        record.regions.push_back(std::move(region));
      }
      TruthRecord truth{record.id, std::nullopt, std::nullopt};
      if (plan.keyword) truth.keyword = planted;
      if (plan.prototype) {
        const std::size_t idx = pick_region(rng);
        for (std::size_t d = 0; d < spec.feature_dim; ++d) {
          record.regions[idx].feature[d] = out.prototypes[0][d] + coord_noise * normal(rng);
        }
        truth.region_idx = idx;
      }
      split.records.push_back(std::move(record));
      out.truth.push_back(std::move(truth));
    }
  };
  make_split("train", spec.train_per_class, out.train);
  make_split("test", spec.test_per_class, out.test);
  return out;
}

json truth_to_json(const TruthRecord& t) {
  json j = {{"id", t.id}};
  j["keyword"] = t.keyword ? json(*t.keyword) : json(nullptr);
  j["region_idx"] = t.region_idx ? json(*t.region_idx) : json(nullptr);
  return j;
}

TruthRecord truth_from_json(const json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
    throw ValidationError("truth record needs a string 'id'");
  }
  TruthRecord t;
  t.id = j["id"].get<std::string>();
  if (j.contains("keyword") && !j["keyword"].is_null()) {
    t.keyword = j["keyword"].get<std::string>();
  }
  if (j.contains("region_idx") && !j["region_idx"].is_null()) {
    if (!j["region_idx"].is_number_unsigned()) {
      throw ValidationError("truth record '" + t.id + "': region_idx must be a non-negative integer");
    }
    t.region_idx = j["region_idx"].get<std::size_t>();
  }
  return t;
}

void save_truth(const std::vector<TruthRecord>& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write truth file " + path.string());
  for (const auto& t : truth) out << truth_to_json(t).dump() << '\n';
}

std::vector<TruthRecord> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth file " + path.string());
  std::vector<TruthRecord> truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      truth.push_back(truth_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed JSON: " + e.what());
    }
  }
  return truth;
}

}  // namespace memescope
