// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "memescope/dataset.h"
#include "memescope/error.h"
#include "memescope/synth.h"
#include "memescope/tokenizer.h"
#include "test_util.h"

namespace memescope {
namespace {

using testing::temp_dir;

MemeRecord make_record(const std::string& id, std::size_t dim, std::size_t regions) {
  MemeRecord r;
  r.id = id;
  r.text = "a goat on a truck";
  r.label = Label::kHateful;
  for (std::size_t i = 0; i < regions; ++i) {
    Region g;
    g.bbox = {0.1 * i / regions, 0.2, 0.5 + 0.1 * i / regions, 0.9};
    for (std::size_t d = 0; d < dim; ++d) g.feature.push_back(0.125 * d - 0.3 * i + 1.0 / 3.0);
    r.regions.push_back(std::move(g));
  }
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string expect_validation_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected ValidationError";
  return "";
}

TEST(Jsonl, SaveLoadRoundTripIsLossless) {
  DatasetSplit split;
  split.records.push_back(make_record("m1", 5, 3));
  split.records.push_back(make_record("m2", 5, 0));
  split.records[1].label = Label::kNonHateful;
  split.records[1].image_path = "img/m2.png";
  split.records[1].text = "quote \" backslash \\ and unicode caf\xc3\xa9";
  const auto path = temp_dir("jsonl_rt") / "split.jsonl";
  save_jsonl(split, path);
  const DatasetSplit back = load_jsonl(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = split.records[i];
    const auto& b = back.records[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.image_path, b.image_path);
    ASSERT_EQ(a.regions.size(), b.regions.size());
    for (std::size_t r = 0; r < a.regions.size(); ++r) {
      EXPECT_EQ(a.regions[r].bbox, b.regions[r].bbox);
      EXPECT_EQ(a.regions[r].feature, b.regions[r].feature);  // bit-exact doubles
    }
  }
  // A second save of the loaded split is byte-identical.
  const auto path2 = path.parent_path() / "again.jsonl";
  save_jsonl(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(Jsonl, InvertedBoxNamesTheRecord) {
  MemeRecord r = make_record("bad-box-7", 3, 2);
  r.regions[1].bbox = {0.8, 0.1, 0.3, 0.5};
  const std::string msg = expect_validation_error([&] { validate_record(r); });
  EXPECT_NE(msg.find("bad-box-7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bbox"), std::string::npos) << msg;

  const auto path = temp_dir("jsonl_box") / "x.jsonl";
  write_text(path,
             R"({"id":"ok","text":"t","label":0,"regions":[]})"
             "\n"
             R"({"id":"bad-box-7","text":"t","label":1,"regions":[{"bbox":[0.8,0.1,0.3,0.5],"feat":[1]}]})"
             "\n");
  const std::string msg2 = expect_validation_error([&] { load_jsonl(path); });
  EXPECT_NE(msg2.find("bad-box-7"), std::string::npos) << msg2;
  EXPECT_NE(msg2.find(":2"), std::string::npos) << msg2;
}

TEST(Jsonl, BoxBoundsAreEnforced) {
  for (BoundingBox box : {BoundingBox{-0.1, 0, 0.5, 0.5}, BoundingBox{0, 0, 1.01, 0.5},
                          BoundingBox{0.2, 0.5, 0.2, 0.9}, BoundingBox{0, 0.5, 1, 0.5}}) {
    MemeRecord r = make_record("r", 2, 1);
    r.regions[0].bbox = box;
    EXPECT_THROW(validate_record(r), ValidationError);
  }
  MemeRecord full = make_record("r", 2, 1);
  full.regions[0].bbox = {0, 0, 1, 1};
  EXPECT_NO_THROW(validate_record(full));
}

TEST(Jsonl, MixedFeatureDimsAreRejected) {
  DatasetSplit split;
  split.records.push_back(make_record("a", 4, 2));
  split.records.push_back(make_record("b", 5, 2));
  const std::string msg = expect_validation_error([&] { validate_split(split); });
  EXPECT_NE(msg.find("b"), std::string::npos);

  DatasetSplit inner;
  inner.records.push_back(make_record("c", 4, 2));
  inner.records[0].regions[1].feature.pop_back();
  EXPECT_THROW(validate_split(inner), ValidationError);
}

TEST(Jsonl, DuplicateIdsAreRejected) {
  DatasetSplit split;
  split.records.push_back(make_record("same", 2, 1));
  split.records.push_back(make_record("same", 2, 1));
  EXPECT_THROW(validate_split(split), ValidationError);
}

TEST(Jsonl, MalformedLineReportsItsNumber) {
  const auto path = temp_dir("jsonl_bad") / "x.jsonl";
  write_text(path,
             R"({"id":"a","text":"t","label":0,"regions":[]})"
             "\n\n"
             R"({"id":"b","text":"t","label":1,"regions":[]})"
             "\n"
             R"({"id":"c","text":"t","label":)"
             "\n");
  const std::string msg = expect_validation_error([&] { load_jsonl(path); });
  EXPECT_NE(msg.find(":4"), std::string::npos) << msg;
}

TEST(Jsonl, BadLabelIsRejected) {
  for (const char* label : {"2", "-1", "\"yes\"", "0.5"}) {
    const auto path = temp_dir("jsonl_label") / "x.jsonl";
    write_text(path, std::string(R"({"id":"a","text":"t","regions":[],"label":)") + label + "}\n");
    const std::string msg = expect_validation_error([&] { load_jsonl(path); });
    EXPECT_NE(msg.find("label"), std::string::npos) << msg;
  }
}

TEST(Jsonl, UnknownFieldsArePreserved) {
  const auto dir = temp_dir("jsonl_extra");
  write_text(dir / "in.jsonl",
             R"({"id":"a","text":"t","label":1,"regions":[],"source":{"url":"x","n":[1,2]},"zeta":null})"
             "\n");
  const DatasetSplit split = load_jsonl(dir / "in.jsonl");
  ASSERT_EQ(split.size(), 1u);
  EXPECT_EQ(split.records[0].extra["source"]["n"][1], 2);
  EXPECT_TRUE(split.records[0].extra.contains("zeta"));
  save_jsonl(split, dir / "out.jsonl");
  const DatasetSplit again = load_jsonl(dir / "out.jsonl");
  EXPECT_EQ(again.records[0].extra, split.records[0].extra);
  EXPECT_EQ(record_to_json(again.records[0]), record_to_json(split.records[0]));
}

TEST(Jsonl, MissingFileIsAnError) {
  EXPECT_THROW(load_jsonl(temp_dir("jsonl_missing") / "nope.jsonl"), Error);
}

TEST(Dataset, FindAndFeatureDim) {
  DatasetSplit split;
  EXPECT_EQ(split.feature_dim(), 0u);
  split.records.push_back(make_record("a", 0, 0));
  split.records.push_back(make_record("b", 7, 3));
  EXPECT_EQ(split.feature_dim(), 7u);
  EXPECT_EQ(split.find("b").regions.size(), 3u);
  EXPECT_THROW(split.find("zzz"), NotFoundError);
}

TEST(SplitStats, CountsLabels) {
  DatasetSplit empty;
  const SplitStats e = split_stats(empty);
  EXPECT_EQ(e.hateful, 0u);
  EXPECT_EQ(e.nonhateful, 0u);

  DatasetSplit split;
  for (int i = 0; i < 7; ++i) {
    split.records.push_back(make_record("r" + std::to_string(i), 1, 1));
    split.records.back().label = i % 3 == 0 ? Label::kNonHateful : Label::kHateful;
  }
  const SplitStats s = split_stats(split);
  EXPECT_EQ(s.hateful, 4u);
  EXPECT_EQ(s.nonhateful, 3u);
}

TEST(Synth, HundredPerClassIsBalanced) {
  for (LabelRule rule : {LabelRule::kTextOnly, LabelRule::kVisualOnly, LabelRule::kConjunction}) {
    SyntheticSpec spec;
    spec.rule = rule;
    spec.train_per_class = 100;
    spec.test_per_class = 30;
    const SyntheticDataset ds = synth_generate(spec);
    const SplitStats tr = split_stats(ds.train);
    const SplitStats te = split_stats(ds.test);
    EXPECT_EQ(tr.hateful, 100u);
    EXPECT_EQ(tr.nonhateful, 100u);
    EXPECT_EQ(te.hateful, 30u);
    EXPECT_EQ(te.nonhateful, 30u);
    EXPECT_NO_THROW(validate_split(ds.train));
    EXPECT_NO_THROW(validate_split(ds.test));
    EXPECT_EQ(ds.truth.size(), 260u);
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  SyntheticSpec spec;
  spec.train_per_class = 30;
  const SyntheticDataset a = synth_generate(spec);
  const SyntheticDataset b = synth_generate(spec);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(record_to_json(a.train.records[i]).dump(), record_to_json(b.train.records[i]).dump());
  }
  EXPECT_EQ(a.vocab, b.vocab);
  EXPECT_EQ(a.prototypes, b.prototypes);

  spec.seed += 1;
  const SyntheticDataset c = synth_generate(spec);
  EXPECT_NE(record_to_json(a.train.records[0]).dump(), record_to_json(c.train.records[0]).dump());
}

TEST(Synth, PrototypesAreOrthonormal) {
  SyntheticSpec spec;
  const SyntheticDataset ds = synth_generate(spec);
  ASSERT_EQ(ds.prototypes.size(), spec.num_prototypes);
  for (std::size_t i = 0; i < ds.prototypes.size(); ++i) {
    for (std::size_t j = 0; j < ds.prototypes.size(); ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < spec.feature_dim; ++d) dot += ds.prototypes[i][d] * ds.prototypes[j][d];
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Synth, InvalidSpecsAreRejected) {
  auto bad = [](auto mutate) {
    SyntheticSpec s;
    mutate(s);
    EXPECT_THROW(synth_generate(s), ValidationError);
  };
  bad([](SyntheticSpec& s) { s.noise = 0.5; });
  bad([](SyntheticSpec& s) { s.noise = -0.1; });
  bad([](SyntheticSpec& s) { s.num_prototypes = 1; });
  bad([](SyntheticSpec& s) { s.num_prototypes = s.feature_dim + 1; });
  bad([](SyntheticSpec& s) { s.keywords.clear(); });
  bad([](SyntheticSpec& s) { s.regions_per_record = 0; });
  bad([](SyntheticSpec& s) { s.train_per_class = 0; });
  bad([](SyntheticSpec& s) { s.min_words = 5, s.max_words = 4; });
  bad([](SyntheticSpec& s) { s.keywords = {"two words"}; });
}

TEST(Synth, SpecJsonRoundTrip) {
  SyntheticSpec s;
  s.rule = LabelRule::kVisualOnly;
  s.noise = 0.25;
  s.regions_per_record = 9;
  const SyntheticSpec back = SyntheticSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(parse_rule(rule_name(LabelRule::kConjunction)), LabelRule::kConjunction);
  EXPECT_THROW(parse_rule("both"), ValidationError);
}

TEST(Synth, RuleTable) {
  EXPECT_EQ(rule_label(LabelRule::kConjunction, true, false), Label::kNonHateful);
  EXPECT_EQ(rule_label(LabelRule::kConjunction, false, true), Label::kNonHateful);
  EXPECT_EQ(rule_label(LabelRule::kConjunction, true, true), Label::kHateful);
  EXPECT_EQ(rule_label(LabelRule::kTextOnly, true, false), Label::kHateful);
  EXPECT_EQ(rule_label(LabelRule::kTextOnly, false, true), Label::kNonHateful);
  EXPECT_EQ(rule_label(LabelRule::kVisualOnly, false, true), Label::kHateful);
  EXPECT_EQ(rule_label(LabelRule::kVisualOnly, true, false), Label::kNonHateful);
}

// Index of the region whose feature is most aligned with the planted prototype.
std::size_t nearest_to_planted(const MemeRecord& r, const std::vector<double>& proto) {
  std::size_t best = 0;
  double best_dot = -1e300;
  for (std::size_t i = 0; i < r.regions.size(); ++i) {
    double dot = 0.0;
    for (std::size_t d = 0; d < proto.size(); ++d) dot += r.regions[i].feature[d] * proto[d];
    if (dot > best_dot) best_dot = dot, best = i;
  }
  return best;
}

TEST(Synth, LabelsAreRecomputableFromContentsAndTruth) {
  for (LabelRule rule : {LabelRule::kTextOnly, LabelRule::kVisualOnly, LabelRule::kConjunction}) {
    SyntheticSpec spec;
    spec.rule = rule;
    const SyntheticDataset ds = synth_generate(spec);
    std::vector<const MemeRecord*> all;
    for (const auto& r : ds.train.records) all.push_back(&r);
    for (const auto& r : ds.test.records) all.push_back(&r);
    ASSERT_EQ(all.size(), ds.truth.size());
    std::size_t keyword_only_negatives = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const MemeRecord& r = *all[i];
      const TruthRecord& t = ds.truth[i];
      ASSERT_EQ(r.id, t.id);
      const bool has_kw = text_has_word(r.text, spec.keywords.front());
      EXPECT_EQ(has_kw, t.keyword.has_value()) << r.id;
      EXPECT_EQ(rule_label(rule, has_kw, t.region_idx.has_value()), r.label) << r.id;
      if (t.region_idx) {
        ASSERT_LT(*t.region_idx, r.regions.size());
        // The recorded region really carries the prototype.
        EXPECT_EQ(nearest_to_planted(r, ds.prototypes[0]), *t.region_idx) << r.id;
      }
      if (rule == LabelRule::kConjunction && has_kw && !t.region_idx) {
        EXPECT_EQ(r.label, Label::kNonHateful);
        ++keyword_only_negatives;
      }
    }
    if (rule == LabelRule::kConjunction) EXPECT_GT(keyword_only_negatives, 0u);
  }
}

TEST(Synth, ConjunctionPositivesHaveExactlyOnePlantedRegion) {
  SyntheticSpec spec;
  const SyntheticDataset ds = synth_generate(spec);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const MemeRecord& r = ds.train.records[i];
    if (r.label != Label::kHateful) continue;
    ASSERT_TRUE(ds.truth[i].region_idx.has_value());
    // Only the planted region is close to prototype 0.
    std::size_t close = 0;
    for (const auto& g : r.regions) {
      double dot = 0.0;
      for (std::size_t d = 0; d < spec.feature_dim; ++d) dot += g.feature[d] * ds.prototypes[0][d];
      close += dot > 0.5;
    }
    EXPECT_EQ(close, 1u) << r.id;
  }
}

TEST(Synth, TruthSidecarRoundTrip) {
  SyntheticSpec spec;
  spec.train_per_class = 10;
  spec.test_per_class = 5;
  const SyntheticDataset ds = synth_generate(spec);
  const auto path = temp_dir("truth") / "truth.jsonl";
  save_truth(ds.truth, path);
  const auto back = load_truth(path);
  ASSERT_EQ(back.size(), ds.truth.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(truth_to_json(back[i]), truth_to_json(ds.truth[i]));
  }
}

TEST(Synth, KeywordTokenizesIntoItsPieces) {
  SyntheticSpec spec;
  const SyntheticDataset ds = synth_generate(spec);
  const auto ids = wordpiece("dishwasher", ds.vocab);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ds.vocab.token(ids[0]), "dish");
  EXPECT_EQ(ds.vocab.token(ids[1]), "##wash");
  EXPECT_EQ(ds.vocab.token(ids[2]), "##er");
  for (const auto& r : ds.train.records) {
    for (const auto& w : pre_tokenize(r.text)) {
      const auto pieces = wordpiece(w, ds.vocab);
      ASSERT_FALSE(pieces.empty());
      EXPECT_NE(pieces[0], WordPieceVocab::kUnk) << w;
    }
  }
}

// Brute-force oracle: full-batch logistic regression on bag-of-words plus the
// mean region feature.
class LinearProbe {
 public:
  explicit LinearProbe(const DatasetSplit& train) {
    for (const auto& r : train.records) {
      for (const auto& w : pre_tokenize(r.text)) vocab_.emplace(w, vocab_.size());
    }
    dim_ = train.feature_dim();
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (const auto& r : train.records) {
      xs.push_back(features(r));
      ys.push_back(r.label == Label::kHateful ? 1.0 : 0.0);
    }
    w_.assign(xs[0].size(), 0.0);
    const double lr = 0.5;
    for (int it = 0; it < 3000; ++it) {
      std::vector<double> g(w_.size(), 0.0);
      double gb = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double err = sigmoid(score(xs[i])) - ys[i];
        for (std::size_t k = 0; k < w_.size(); ++k) g[k] += err * xs[i][k];
        gb += err;
      }
      for (std::size_t k = 0; k < w_.size(); ++k) w_[k] -= lr * g[k] / xs.size();
      b_ -= lr * gb / xs.size();
    }
  }

  double accuracy(const DatasetSplit& split) const {
    std::size_t right = 0;
    for (const auto& r : split.records) {
      const bool hateful = score(features(r)) >= 0.0;
      right += hateful == (r.label == Label::kHateful);
    }
    return static_cast<double>(right) / split.size();
  }

 private:
  static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  std::vector<double> features(const MemeRecord& r) const {
    // The mean feature is scaled by the region count so its signal is O(1).
    std::vector<double> x(vocab_.size() + dim_, 0.0);
    for (const auto& w : pre_tokenize(r.text)) {
      if (auto it = vocab_.find(w); it != vocab_.end()) x[it->second] = 1.0;
    }
    for (const auto& g : r.regions) {
      for (std::size_t d = 0; d < dim_; ++d) x[vocab_.size() + d] += g.feature[d];
    }
    return x;
  }

  double score(const std::vector<double>& x) const {
    double s = b_;
    for (std::size_t k = 0; k < x.size(); ++k) s += w_[k] * x[k];
    return s;
  }

  std::map<std::string, std::size_t> vocab_;
  std::size_t dim_ = 0;
  std::vector<double> w_;
  double b_ = 0.0;
};

TEST(Synth, LinearProbeSeparatesPlantedSignal) {
  for (LabelRule rule : {LabelRule::kTextOnly, LabelRule::kVisualOnly, LabelRule::kConjunction}) {
    SyntheticSpec spec;
    spec.rule = rule;
    spec.noise = 0.1;
    const SyntheticDataset ds = synth_generate(spec);
    const LinearProbe probe(ds.train);
    EXPECT_GE(probe.accuracy(ds.test), 0.99) << rule_name(rule);
  }
}

}  // namespace
}  // namespace memescope
